#pragma once

#include "dlio/bench.hpp"
#include "dlio/checkpoint.hpp"
#include "dlio/crc32.hpp"
#include "dlio/error.hpp"
#include "dlio/fsio.hpp"
#include "dlio/pipeline.hpp"
#include "dlio/tensor.hpp"
#include "dlio/trace.hpp"
#include "dlio/workload.hpp"

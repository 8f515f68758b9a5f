#pragma once

#include "agsl/metrics/flops.hpp"
#include "agsl/metrics/metrics.hpp"

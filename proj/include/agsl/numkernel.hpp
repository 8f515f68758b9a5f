#pragma once

#include "agsl/numkernel/finite_diff.hpp"
#include "agsl/numkernel/flop_counter.hpp"
#include "agsl/numkernel/ops.hpp"
#include "agsl/numkernel/param_set.hpp"
#include "agsl/numkernel/rng.hpp"
#include "agsl/numkernel/tape.hpp"
#include "agsl/numkernel/tensor.hpp"

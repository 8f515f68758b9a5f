#pragma once

#include "agsl/sparsify/adam.hpp"
#include "agsl/sparsify/ags.hpp"
#include "agsl/sparsify/loss.hpp"
#include "agsl/sparsify/train.hpp"

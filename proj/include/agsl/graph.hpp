#pragma once

#include "agsl/graph/adjacency.hpp"
#include "agsl/graph/export.hpp"
#include "agsl/graph/hard_concrete.hpp"
#include "agsl/graph/napl_agcn.hpp"

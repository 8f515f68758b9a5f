#pragma once

#include "agsl/data/csv.hpp"
#include "agsl/data/series.hpp"
#include "agsl/data/synthetic.hpp"
#include "agsl/data/windows.hpp"

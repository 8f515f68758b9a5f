#pragma once

#include "agsl/harness/commands.hpp"
#include "agsl/harness/config.hpp"
#include "agsl/harness/run_dir.hpp"

#pragma once

// Everything in one include.

#include "lmmss/diagnostics.hpp"
#include "lmmss/error.hpp"
#include "lmmss/gsvd.hpp"
#include "lmmss/problems.hpp"
#include "lmmss/scaling.hpp"
#include "lmmss/solver.hpp"
#include "lmmss/types.hpp"

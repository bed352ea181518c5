#pragma once

// Estimation of quadratic covariations of the latent driver of bond-market
// forward curves from discretely observed yield/price panels: difference
// returns, (truncated) realized covariation kernels, a data-driven jump
// truncation rule, long-run volatility averaging, and an exact forward-curve
// simulator for Monte-Carlo studies.

#include "termcov/covariation.hpp"
#include "termcov/empirical.hpp"
#include "termcov/errors.hpp"
#include "termcov/grid.hpp"
#include "termcov/io.hpp"
#include "termcov/mc.hpp"
#include "termcov/panels.hpp"
#include "termcov/parallel.hpp"
#include "termcov/presmooth.hpp"
#include "termcov/report.hpp"
#include "termcov/simulator.hpp"
#include "termcov/step_kernel.hpp"
#include "termcov/truncation.hpp"
#include "termcov/util.hpp"

#pragma once

#include "common.hpp"
#include "rng.hpp"
#include "data.hpp"
#include "formula.hpp"
#include "grid.hpp"
#include "binning.hpp"
#include "nonparametric.hpp"
#include "csv.hpp"
#include "parallel.hpp"
#include "kernel.hpp"
#include "spline.hpp"
#include "mcmc.hpp"
#include "mrh.hpp"
#include "dbeta.hpp"
#include "timevar.hpp"
#include "yp.hpp"
#include "sim.hpp"
#include "svg.hpp"

#pragma once

#include "pca/analysis.hpp"
#include "pca/config.hpp"
#include "pca/csv.hpp"
#include "pca/errors.hpp"
#include "pca/grid.hpp"
#include "pca/linsolve.hpp"
#include "pca/model.hpp"
#include "pca/rng.hpp"
#include "pca/steady.hpp"
#include "pca/stepper.hpp"

#pragma once

#include "homtest/dataset.hpp"
#include "homtest/engine.hpp"
#include "homtest/errors.hpp"
#include "homtest/folds.hpp"
#include "homtest/io.hpp"
#include "homtest/lasso.hpp"
#include "homtest/nuisance.hpp"
#include "homtest/score.hpp"
#include "homtest/sim.hpp"

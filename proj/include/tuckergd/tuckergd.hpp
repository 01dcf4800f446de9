#pragma once

#include "tuckergd/completion.hpp"
#include "tuckergd/distance.hpp"
#include "tuckergd/errors.hpp"
#include "tuckergd/experiments.hpp"
#include "tuckergd/factor_quad.hpp"
#include "tuckergd/factors.hpp"
#include "tuckergd/hosvd.hpp"
#include "tuckergd/io.hpp"
#include "tuckergd/linalg.hpp"
#include "tuckergd/parallel.hpp"
#include "tuckergd/random.hpp"
#include "tuckergd/regression.hpp"
#include "tuckergd/solver.hpp"
#include "tuckergd/tensor.hpp"

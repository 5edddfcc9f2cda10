#pragma once

#include "vmc/errors.hpp"
#include "vmc/param_field.hpp"
#include "vmc/mesh_fem.hpp"
#include "vmc/sampling.hpp"
#include "vmc/poly_chaos.hpp"
#include "vmc/tensor_train.hpp"
#include "vmc/vmc_reconstruct.hpp"
#include "vmc/error_bounds.hpp"
#include "vmc/experiment.hpp"

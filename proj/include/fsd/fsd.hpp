#pragma once

#include "fsd/analytic_field.hpp"
#include "fsd/bench.hpp"
#include "fsd/field.hpp"
#include "fsd/io.hpp"
#include "fsd/losses.hpp"
#include "fsd/metrics.hpp"
#include "fsd/mlp_decoder.hpp"
#include "fsd/parallel.hpp"
#include "fsd/polytope_decoder.hpp"
#include "fsd/pose_geometry.hpp"
#include "fsd/surface_extract.hpp"
#include "fsd/types.hpp"
#include "fsd/weights_io.hpp"

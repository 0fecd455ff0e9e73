#pragma once

#include "m2d/geometry.hpp"
#include "m2d/grid.hpp"
#include "m2d/hypotheses.hpp"
#include "m2d/image_ops.hpp"
#include "m2d/io.hpp"
#include "m2d/losses.hpp"
#include "m2d/metrics.hpp"
#include "m2d/mff.hpp"
#include "m2d/parallel.hpp"
#include "m2d/pipeline.hpp"
#include "m2d/stf.hpp"
#include "m2d/synthetic.hpp"
#include "m2d/volumes.hpp"

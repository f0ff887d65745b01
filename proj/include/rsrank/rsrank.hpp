#pragma once

#include "rsrank/core.hpp"
#include "rsrank/decompose.hpp"
#include "rsrank/estimate.hpp"
#include "rsrank/evaluate.hpp"
#include "rsrank/io.hpp"
#include "rsrank/models.hpp"
#include "rsrank/rng.hpp"
#include "rsrank/spectral.hpp"

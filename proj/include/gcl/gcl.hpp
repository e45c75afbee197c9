#pragma once

#include "gcl/analysis.hpp"
#include "gcl/datasets.hpp"
#include "gcl/error.hpp"
#include "gcl/experiment.hpp"
#include "gcl/layers.hpp"
#include "gcl/linalg.hpp"
#include "gcl/loss.hpp"
#include "gcl/serialize.hpp"
#include "gcl/svg.hpp"
#include "gcl/trainer.hpp"

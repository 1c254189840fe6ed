#pragma once

// Umbrella header: the whole library in one include.

#include "enk/binio.hpp"
#include "enk/cli.hpp"
#include "enk/config.hpp"
#include "enk/conv.hpp"
#include "enk/data.hpp"
#include "enk/error.hpp"
#include "enk/format.hpp"
#include "enk/gradcam.hpp"
#include "enk/gradcheck.hpp"
#include "enk/graph.hpp"
#include "enk/layers.hpp"
#include "enk/loss.hpp"
#include "enk/metrics.hpp"
#include "enk/models.hpp"
#include "enk/optim.hpp"
#include "enk/parallel.hpp"
#include "enk/rng.hpp"
#include "enk/tensor.hpp"
#include "enk/train.hpp"
#include "enk/version.hpp"

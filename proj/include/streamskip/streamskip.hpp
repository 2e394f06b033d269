#pragma once

#include "streamskip/backend.hpp"
#include "streamskip/bench.hpp"
#include "streamskip/coherence.hpp"
#include "streamskip/core.hpp"
#include "streamskip/engine.hpp"
#include "streamskip/flow.hpp"
#include "streamskip/image_io.hpp"
#include "streamskip/knn.hpp"
#include "streamskip/rng.hpp"
#include "streamskip/synthetic.hpp"

#pragma once

#include "mcmpg/config.hpp"
#include "mcmpg/error.hpp"
#include "mcmpg/evaluation.hpp"
#include "mcmpg/io.hpp"
#include "mcmpg/keyframe.hpp"
#include "mcmpg/mask.hpp"
#include "mcmpg/mp_graph.hpp"
#include "mcmpg/parallel.hpp"
#include "mcmpg/pipeline.hpp"
#include "mcmpg/png_io.hpp"
#include "mcmpg/propagation.hpp"
#include "mcmpg/rng.hpp"
#include "mcmpg/sequence.hpp"
#include "mcmpg/synth.hpp"
#include "mcmpg/track.hpp"

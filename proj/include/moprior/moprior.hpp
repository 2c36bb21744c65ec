#pragma once

// Umbrella header for the motion-prior toolkit: distance fields over
// per-joint acceleration vectors of short motion segments, composed into a
// differentiable motion-plausibility energy used to denoise, complete,
// smooth, refine and generate joint-trajectory sequences.

#include "moprior/bvh.hpp"
#include "moprior/container.hpp"
#include "moprior/csv.hpp"
#include "moprior/energy.hpp"
#include "moprior/errors.hpp"
#include "moprior/eval.hpp"
#include "moprior/geometry.hpp"
#include "moprior/harness.hpp"
#include "moprior/manifold.hpp"
#include "moprior/motion.hpp"
#include "moprior/parallel.hpp"
#include "moprior/rng.hpp"
#include "moprior/skeleton.hpp"
#include "moprior/synth.hpp"
#include "moprior/udf.hpp"

#pragma once

#include "sprobe/common.hpp"
#include "sprobe/cv.hpp"
#include "sprobe/diagnostics.hpp"
#include "sprobe/harness.hpp"
#include "sprobe/latents.hpp"
#include "sprobe/metrics.hpp"
#include "sprobe/multitoken.hpp"
#include "sprobe/probes/probe.hpp"
#include "sprobe/quiver.hpp"
#include "sprobe/regimes.hpp"
#include "sprobe/sae.hpp"
#include "sprobe/synth.hpp"
#include "sprobe/tensor_io.hpp"

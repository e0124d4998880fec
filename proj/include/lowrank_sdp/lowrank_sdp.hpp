#pragma once

#include "lowrank_sdp/random.hpp"
#include "lowrank_sdp/spectral.hpp"
#include "lowrank_sdp/core.hpp"
#include "lowrank_sdp/perturb.hpp"
#include "lowrank_sdp/penalty.hpp"
#include "lowrank_sdp/solve.hpp"
#include "lowrank_sdp/certify.hpp"
#include "lowrank_sdp/problems.hpp"
#include "lowrank_sdp/io.hpp"

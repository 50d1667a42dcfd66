#pragma once

#include "klnn/bench.hpp"
#include "klnn/bias.hpp"
#include "klnn/cloud.hpp"
#include "klnn/csv.hpp"
#include "klnn/density.hpp"
#include "klnn/entropy.hpp"
#include "klnn/error.hpp"
#include "klnn/linalg.hpp"
#include "klnn/mutual_info.hpp"
#include "klnn/neighbors.hpp"
#include "klnn/parallel.hpp"
#include "klnn/rng.hpp"
#include "klnn/special.hpp"
#include "klnn/synth.hpp"

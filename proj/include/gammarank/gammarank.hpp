#pragma once

#include "gammarank/cluster.hpp"
#include "gammarank/em.hpp"
#include "gammarank/io.hpp"
#include "gammarank/model.hpp"
#include "gammarank/pipeline.hpp"
#include "gammarank/rankprob.hpp"
#include "gammarank/rng.hpp"
#include "gammarank/simulator.hpp"
#include "gammarank/structures.hpp"
#include "gammarank/version.hpp"

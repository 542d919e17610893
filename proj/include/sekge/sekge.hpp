#pragma once

#include "sekge/autodiff.hpp"
#include "sekge/bruteforce.hpp"
#include "sekge/checkpoint.hpp"
#include "sekge/cluster.hpp"
#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/hash.hpp"
#include "sekge/kg_io.hpp"
#include "sekge/location_encoder.hpp"
#include "sekge/metrics.hpp"
#include "sekge/model.hpp"
#include "sekge/operators.hpp"
#include "sekge/params.hpp"
#include "sekge/query.hpp"
#include "sekge/query_engine.hpp"
#include "sekge/rng.hpp"
#include "sekge/sampler.hpp"
#include "sekge/synth.hpp"
#include "sekge/tensor.hpp"
#include "sekge/trainer.hpp"

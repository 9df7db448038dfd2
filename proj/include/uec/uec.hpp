#pragma once

#include "uec/convolution.hpp"
#include "uec/error.hpp"
#include "uec/gaussian.hpp"
#include "uec/laplace.hpp"
#include "uec/metrics.hpp"
#include "uec/newton.hpp"
#include "uec/pipeline.hpp"
#include "uec/probe.hpp"
#include "uec/retrieval.hpp"
#include "uec/similarity.hpp"
#include "uec/store_io.hpp"
#include "uec/synth.hpp"
#include "uec/text_io.hpp"

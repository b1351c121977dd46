#pragma once

#include "siamft/corpus.hpp"
#include "siamft/encoder.hpp"
#include "siamft/episodes.hpp"
#include "siamft/error.hpp"
#include "siamft/eval.hpp"
#include "siamft/pipeline.hpp"
#include "siamft/random.hpp"
#include "siamft/synthetic.hpp"
#include "siamft/tensor.hpp"
#include "siamft/training.hpp"
#include "siamft/vocab.hpp"

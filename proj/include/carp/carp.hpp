#pragma once
// Umbrella header.

#include "carp/array_io.hpp"
#include "carp/capsules.hpp"
#include "carp/checkpoint.hpp"
#include "carp/common.hpp"
#include "carp/corpus.hpp"
#include "carp/dataset.hpp"
#include "carp/encoder.hpp"
#include "carp/evaluation.hpp"
#include "carp/explain.hpp"
#include "carp/extraction.hpp"
#include "carp/gradient_check.hpp"
#include "carp/losses.hpp"
#include "carp/model.hpp"
#include "carp/prediction.hpp"
#include "carp/rmsprop.hpp"
#include "carp/text.hpp"
#include "carp/trainer.hpp"

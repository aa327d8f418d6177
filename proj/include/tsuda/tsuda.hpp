// Umbrella include for the whole library.
#pragma once

#include "tsuda/algorithms.hpp"
#include "tsuda/autodiff.hpp"
#include "tsuda/checkpoint.hpp"
#include "tsuda/common.hpp"
#include "tsuda/data.hpp"
#include "tsuda/dataset_io.hpp"
#include "tsuda/gmm.hpp"
#include "tsuda/losses.hpp"
#include "tsuda/metrics.hpp"
#include "tsuda/nets.hpp"
#include "tsuda/optimizer.hpp"
#include "tsuda/pipeline.hpp"
#include "tsuda/preprocess.hpp"
#include "tsuda/records.hpp"
#include "tsuda/selection.hpp"
#include "tsuda/sinkhorn.hpp"
#include "tsuda/splits.hpp"
#include "tsuda/synthetic.hpp"

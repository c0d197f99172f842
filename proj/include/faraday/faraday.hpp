#pragma once

#include "faraday/core_model.hpp"
#include "faraday/decay_fit.hpp"
#include "faraday/error.hpp"
#include "faraday/estimation.hpp"
#include "faraday/io/config.hpp"
#include "faraday/io/experiment.hpp"
#include "faraday/io/report.hpp"
#include "faraday/io/stream_file.hpp"
#include "faraday/lockin.hpp"
#include "faraday/pipeline.hpp"
#include "faraday/preparation.hpp"
#include "faraday/rng.hpp"
#include "faraday/sample_stream.hpp"
#include "faraday/signal_synthesis.hpp"
#include "faraday/stats.hpp"

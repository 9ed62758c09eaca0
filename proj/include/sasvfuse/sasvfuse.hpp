#pragma once

#include "sasvfuse/error.hpp"
#include "sasvfuse/protocol.hpp"
#include "sasvfuse/embstore.hpp"
#include "sasvfuse/features.hpp"
#include "sasvfuse/backends/model.hpp"
#include "sasvfuse/metrics.hpp"
#include "sasvfuse/synthetic.hpp"
#include "sasvfuse/pipeline.hpp"
#include "sasvfuse/vad.hpp"

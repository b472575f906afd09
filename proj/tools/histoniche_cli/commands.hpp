// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "run_config.hpp"

namespace histoniche::cli {

int cmd_synth(const RunConfig& cfg);
int cmd_calibrate(const RunConfig& cfg);
int cmd_split(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_infer(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_probe(const RunConfig& cfg);
int cmd_render(const RunConfig& cfg);
int cmd_pipeline(const RunConfig& cfg);

}  // namespace histoniche::cli

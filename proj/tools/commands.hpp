#pragma once

#include "run_config.hpp"

namespace fusenet::cli {

namespace exit_code {
constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kConfig = 2;
constexpr int kData = 3;
constexpr int kVerification = 4;
}  // namespace exit_code

/// Creates the output directory and echoes the resolved config into it.
std::filesystem::path prepare_output(const RunConfig& cfg);

int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg);
int cmd_predict(const RunConfig& cfg);
int cmd_gradcheck(const RunConfig& cfg);
int cmd_bench(const RunConfig& cfg);

}  // namespace fusenet::cli

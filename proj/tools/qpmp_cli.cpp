// Copyright 2026 The qpmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>

#include "qpmp/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Constrained fidelity optimization for open three-level systems"};
  std::string config_path;
  std::string out_dir;
  std::string mode = "solve";
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--mode", mode, "solve | propagate | check")->check(CLI::IsMember({"solve", "propagate", "check"}));
  app.add_flag("--quiet", quiet, "suppress progress output");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : qpmp::kExitConfig;
  }

  qpmp::RunConfig config;
  try {
    config = config_path.empty() ? qpmp::parse_config_text("") : qpmp::parse_config_file(config_path);
    if (!out_dir.empty()) config.out_dir = out_dir;
  } catch (const qpmp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return qpmp::kExitConfig;
  }

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cout;
  return qpmp::run(config, qpmp::parse_run_mode(mode), log);
}

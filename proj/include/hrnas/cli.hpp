/* Copyright 2026 The hrnas Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef HRNAS_CLI_HPP_
#define HRNAS_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace hrnas::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseError = 2,
  kTrainingAborted = 3,
  kChecksumError = 4,
};

/// Runs one `hrnas` command line; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 8 hex digits of the crc32 of a file's bytes.
std::string file_checksum(const std::string& path);

}  // namespace hrnas::cli

#endif  // HRNAS_CLI_HPP_

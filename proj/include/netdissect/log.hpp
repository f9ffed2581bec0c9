// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string_view>

namespace netdissect {

enum class LogLevel { quiet = 0, warning = 1, info = 2 };

void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace netdissect

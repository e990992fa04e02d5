// Copyright 2026 The dynrollout Authors
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

#ifndef DYNROLLOUT_SELFTEST_HPP_
#define DYNROLLOUT_SELFTEST_HPP_

#include <cstdint>
#include <iosfwd>

namespace dynrollout {

// Fast oracle and property checks over the installed build. Prints one
// PASS/FAIL line per check and returns true when all pass.
bool run_selftest(std::ostream& os, std::uint64_t seed = 1);

}  // namespace dynrollout

#endif  // DYNROLLOUT_SELFTEST_HPP_

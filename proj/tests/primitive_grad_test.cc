// Copyright 2026 The avtrack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <set>

#include "gtest/gtest.h"
#include "primitive_cases.h"

namespace avtrack {
namespace {

using testing::PrimitiveCase;

class PrimitiveGradTest : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradTest, MatchesCentralDifferencesOnTenSeeds) {
  const PrimitiveCase& c = GetParam();
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    EXPECT_LE(testing::check_primitive(c, seed), 1e-4) << c.kind << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradTest,
                         ::testing::ValuesIn(testing::primitive_cases()),
                         [](const auto& info) {
                           std::string n = info.param.kind;
                           for (char& ch : n) {
                             if (ch == '-') ch = '_';
                           }
                           return n;
                         });

TEST(PrimitiveCoverageTest, EveryRegisteredKindHasACase) {
  std::set<std::string> covered;
  for (const auto& c : testing::primitive_cases()) covered.insert(c.kind);
  for (const std::string& kind : primitive_kinds()) EXPECT_TRUE(covered.count(kind)) << kind;
}

}  // namespace
}  // namespace avtrack

// Copyright 2026 Shield Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace shield {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SHIELD_DEFINE_ERROR(Name)             \
    class Name : public Error {               \
    public:                                   \
        using Error::Error;                   \
    }

SHIELD_DEFINE_ERROR(IoError);
SHIELD_DEFINE_ERROR(SchemaError);
SHIELD_DEFINE_ERROR(RejectRatioExceeded);
SHIELD_DEFINE_ERROR(VocabularyMissing);
SHIELD_DEFINE_ERROR(EmptyTrainingSet);
SHIELD_DEFINE_ERROR(NonFiniteLoss);
SHIELD_DEFINE_ERROR(InsufficientData);
SHIELD_DEFINE_ERROR(ProviderError);
SHIELD_DEFINE_ERROR(EmptyResponse);
SHIELD_DEFINE_ERROR(NoSeedMatch);
SHIELD_DEFINE_ERROR(BudgetUnsatisfiable);
SHIELD_DEFINE_ERROR(PopulationTooSmall);
SHIELD_DEFINE_ERROR(NoAttackEntities);
SHIELD_DEFINE_ERROR(ConfigError);
SHIELD_DEFINE_ERROR(ModelFormatError);

#undef SHIELD_DEFINE_ERROR

// Keeps the unparsed provider output so an analyst can triage it by hand.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace shield

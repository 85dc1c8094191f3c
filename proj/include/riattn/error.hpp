// Copyright 2026 The riattn Authors.
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
#include <string_view>

namespace riattn {

enum class Errc {
  // tensor / autodiff
  ShapeMismatch,
  DomainError,
  IndexOutOfRange,
  NonScalarRoot,
  DoubleBackward,
  NumericOverflow,
  // tokenizer
  EmptyCorpus,
  UnknownWord,
  SentenceTooLong,
  InvalidTokenId,
  // decoder
  GateDisabled,
  StepOverflow,
  // training
  MissingGradient,
  EmptyDataset,
  DimMismatch,
  InvalidConfig,
  // evaluation
  EmptyReference,
  LengthMismatch,
  EmptyInput,
  // synthetic scenes
  InvalidSpec,
  NoActiveReasons,
  SegmentNotFound,
  // file formats
  BadMagic,
  VersionUnsupported,
  TruncatedPayload,
  ChecksumMismatch,
  MissingParameter,
  EmptyTrace,
  IoError,
  ParseError,
  UsageError,
};

constexpr std::string_view errc_name(Errc c) noexcept {
  switch (c) {
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DomainError: return "DomainError";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonScalarRoot: return "NonScalarRoot";
    case Errc::DoubleBackward: return "DoubleBackward";
    case Errc::NumericOverflow: return "NumericOverflow";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::UnknownWord: return "UnknownWord";
    case Errc::SentenceTooLong: return "SentenceTooLong";
    case Errc::InvalidTokenId: return "InvalidTokenId";
    case Errc::GateDisabled: return "GateDisabled";
    case Errc::StepOverflow: return "StepOverflow";
    case Errc::MissingGradient: return "MissingGradient";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyReference: return "EmptyReference";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::InvalidSpec: return "InvalidSpec";
    case Errc::NoActiveReasons: return "NoActiveReasons";
    case Errc::SegmentNotFound: return "SegmentNotFound";
    case Errc::BadMagic: return "BadMagic";
    case Errc::VersionUnsupported: return "VersionUnsupported";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::MissingParameter: return "MissingParameter";
    case Errc::EmptyTrace: return "EmptyTrace";
    case Errc::IoError: return "IoError";
    case Errc::ParseError: return "ParseError";
    case Errc::UsageError: return "UsageError";
  }
  return "Unknown";
}

/// Every failure raised by the library. `code()` is the machine-readable
/// category; the CLI prints it verbatim as the first token of its error line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace riattn

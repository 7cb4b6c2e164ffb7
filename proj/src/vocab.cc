// Copyright 2026 The Warmdistill Authors.
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

#include "warmdistill/vocab.h"

#include <algorithm>

#include "warmdistill/error.h"

namespace wd {

Vocab::Vocab(std::string symbols) : symbols_(std::move(symbols)) {
  std::fill(std::begin(lookup_), std::end(lookup_), -1);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    lookup_[static_cast<unsigned char>(symbols_[i])] =
        static_cast<int>(kNumSpecial + i);
  }
}

const Vocab& Vocab::Char() {
  static const Vocab vocab(
      " 0123456789abcdefghijklmnopABCDEFGHIJKLMNOP+-*=%:><^~#?|");
  return vocab;
}

bool Vocab::Contains(char c) const {
  return lookup_[static_cast<unsigned char>(c)] >= 0;
}

int Vocab::Id(char c) const {
  const int id = lookup_[static_cast<unsigned char>(c)];
  if (id < 0) {
    Fail(ErrorCode::kInvalidArgument,
         std::string("character '") + c + "' is not in the vocabulary");
  }
  return id;
}

std::vector<int> Vocab::Encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(Id(c));
  return ids;
}

std::string Vocab::Decode(std::span<const int> ids) const {
  std::string text;
  for (int id : ids) {
    if (id == kEosId) break;
    if (id < static_cast<int>(kNumSpecial)) continue;
    const std::size_t k = static_cast<std::size_t>(id) - kNumSpecial;
    Require(k < symbols_.size(), ErrorCode::kInvalidArgument,
            "token id " + std::to_string(id) + " is outside the vocabulary");
    text.push_back(symbols_[k]);
  }
  return text;
}

TokenSeq EncodePrompt(std::string_view text) {
  return TokenSeq{Vocab::Char().Encode(text)};
}

TokenSeq EncodeCompletion(std::string_view text) {
  TokenSeq seq{Vocab::Char().Encode(text)};
  seq.ids.push_back(kEosId);
  return seq;
}

std::string Render(const TokenSeq& seq) { return Vocab::Char().Decode(seq.ids); }

}  // namespace wd

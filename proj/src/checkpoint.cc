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

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "warmdistill/lm.h"

namespace wd {

namespace {

constexpr const char* kFormat = "warmdistill-checkpoint";
constexpr int kVersion = 1;

nlohmann::json ConfigToJson(const LmConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"context_len", c.context_len},
          {"n_layers", c.n_layers},     {"n_heads", c.n_heads},
          {"d_model", c.d_model},       {"d_ff", c.d_ff},
          {"seed", c.seed}};
}

LmConfig ConfigFromJson(const nlohmann::json& j) {
  LmConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.context_len = j.at("context_len").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::uint32_t ToLittle(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void SaveCheckpoint(const LanguageModel& model, const std::string& path) {
  nlohmann::json params = nlohmann::json::array();
  for (const ParamEntry& e : model.manifest().entries) {
    params.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  }
  nlohmann::json header = {
      {"format", kFormat},
      {"version", kVersion},
      {"role", RoleName(model.role())},
      {"config", ConfigToJson(model.config())},
      {"manifest",
       {{"head_dim", model.manifest().head_dim},
        {"total", model.manifest().total},
        {"params", params}}},
  };
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  Require(out.good(), ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
  out << header.dump() << '\n';
  std::vector<std::uint32_t> words;
  words.reserve(model.manifest().total);
  for (const Tensor<float>& p : model.params()) {
    for (float v : p.data()) words.push_back(ToLittle(std::bit_cast<std::uint32_t>(v)));
  }
  out.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  Require(out.good(), ErrorCode::kIo, "failed writing checkpoint: " + path);
}

LanguageModel LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorCode::kIo, "cannot open checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kParse, "bad checkpoint header in " + path + ": " + e.what());
  }
  Require(header.value("format", "") == kFormat, ErrorCode::kParse,
          "not a warmdistill checkpoint: " + path);
  Require(header.value("version", 0) == kVersion, ErrorCode::kParse,
          "unsupported checkpoint version in " + path);
  LanguageModel model(ConfigFromJson(header.at("config")),
                      ParseRole(header.at("role").get<std::string>()));
  const nlohmann::json& entries = header.at("manifest").at("params");
  const ParameterManifest& manifest = model.manifest();
  Require(entries.size() == manifest.entries.size(), ErrorCode::kParse,
          "checkpoint manifest does not match its config: " + path);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ParamEntry& e = manifest.entries[i];
    Require(entries[i].at("name").get<std::string>() == e.name &&
                entries[i].at("shape").get<Shape>() == e.shape &&
                entries[i].at("offset").get<std::size_t>() == e.offset,
            ErrorCode::kParse, "checkpoint manifest entry mismatch for " + e.name);
  }
  std::vector<std::uint32_t> words(manifest.total);
  in.read(reinterpret_cast<char*>(words.data()),
          static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  Require(static_cast<std::size_t>(in.gcount()) == words.size() * sizeof(std::uint32_t),
          ErrorCode::kParse, "truncated checkpoint payload: " + path);
  std::size_t k = 0;
  for (Tensor<float>& p : model.params()) {
    for (float& v : p.mutable_data()) {
      v = std::bit_cast<float>(ToLittle(words[k++]));
      Require(std::isfinite(v), ErrorCode::kNonFinite, "non-finite parameter in " + path);
    }
  }
  return model;
}

}  // namespace wd

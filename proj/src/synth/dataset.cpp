#include "agg/synth/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "agg/error.hpp"
#include "agg/synth/quaternion.hpp"
#include "json.hpp"

namespace agg::synth {

using nlohmann::json;

void SequenceDataset::validate() const {
  if (kind == DatasetKind::discrete) {
    require(frames.empty(), ErrorKind::input, "discrete dataset holds frames");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      require(tokens[i].size() == length, ErrorKind::input, "record " + std::to_string(i) + " has the wrong length");
      for (std::size_t t : tokens[i]) {
        require(t < width, ErrorKind::input, "record " + std::to_string(i) + ": token out of range");
      }
    }
  } else {
    require(tokens.empty(), ErrorKind::input, "continuous dataset holds tokens");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      require(frames[i].size() == length, ErrorKind::input, "record " + std::to_string(i) + " has the wrong length");
      for (const auto& f : frames[i]) {
        require(f.size() == width, ErrorKind::input, "record " + std::to_string(i) + ": frame width mismatch");
        for (double v : f) require(std::isfinite(v), ErrorKind::input, "record " + std::to_string(i) + ": non-finite");
      }
    }
  }
}

SequenceDataset sample_dataset(const GroundTruthGrammar& g, std::size_t count, std::size_t length,
                               std::uint64_t seed) {
  SequenceDataset ds;
  ds.width = g.num_tokens();
  ds.length = length;
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, 0xda7a, i));
    ds.tokens.push_back(sample_sequence(g, length, rng));
  }
  return ds;
}

SequenceDataset make_continuous_dataset(const SequenceDataset& discrete,
                                        const std::vector<std::vector<double>>& embedding, double noise_std,
                                        std::uint64_t seed) {
  require(discrete.kind == DatasetKind::discrete, ErrorKind::input, "expected a discrete dataset");
  require(noise_std >= 0.0 && std::isfinite(noise_std), ErrorKind::parameter, "noise_std must be >= 0");
  require(embedding.size() >= discrete.width && !embedding.empty(), ErrorKind::dimension,
          "embedding has fewer rows than the alphabet");
  const std::size_t width = embedding[0].size();
  for (const auto& e : embedding) {
    require(e.size() == width, ErrorKind::dimension, "embedding rows differ in width");
    for (double v : e) require(std::isfinite(v), ErrorKind::input, "embedding has a non-finite entry");
  }
  SequenceDataset out;
  out.kind = DatasetKind::continuous;
  out.width = width;
  out.length = discrete.length;
  for (std::size_t i = 0; i < discrete.tokens.size(); ++i) {
    Rng rng(derive_seed(seed, 0x7015e, i));
    std::vector<std::vector<double>> seq;
    for (std::size_t tok : discrete.tokens[i]) {
      std::vector<double> frame = embedding.at(tok);
      if (noise_std > 0.0) {
        for (double& v : frame) v += noise_std * rng.normal();
      }
      seq.push_back(std::move(frame));
    }
    out.frames.push_back(std::move(seq));
  }
  return out;
}

std::vector<std::vector<double>> quaternion_embedding(std::size_t num_tokens, std::size_t joints,
                                                      std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9a7));
  std::vector<std::vector<double>> out(num_tokens, std::vector<double>(4 * joints));
  for (auto& row : out) {
    for (std::size_t j = 0; j < joints; ++j) {
      Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
      write_block(row, j, quat_normalize(q));
    }
  }
  return out;
}

SequenceDataset make_quaternion_dataset(const SequenceDataset& discrete, std::size_t joints, double noise_std,
                                        std::uint64_t seed) {
  require(joints >= 1, ErrorKind::input, "quaternion dataset needs at least one joint");
  SequenceDataset ds =
      make_continuous_dataset(discrete, quaternion_embedding(discrete.width, joints, seed), noise_std, seed);
  for (auto& seq : ds.frames) {
    for (auto& frame : seq) {
      for (std::size_t j = 0; j < joints; ++j) write_block(frame, j, quat_normalize(read_block(frame, j)));
    }
    seq = to_deltas(seq);
  }
  return ds;
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  fail(ErrorKind::parse, "dataset line " + std::to_string(line) + ": " + what);
}

}  // namespace

SequenceDataset load_dataset(const std::string& path, std::optional<std::size_t> alphabet) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open dataset " + path);
  SequenceDataset ds;
  bool kind_known = false;
  bool length_known = false;
  std::optional<std::size_t> width = alphabet;
  std::size_t max_token = 0;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; })) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::exception& e) {
      parse_fail(line, e.what());
    }
    if (!rec.is_object()) parse_fail(line, "record is not an object");
    try {
      if (rec.contains("meta")) {
        const auto& m = rec.at("meta");
        ds.kind = m.at("kind").get<std::string>() == "continuous" ? DatasetKind::continuous : DatasetKind::discrete;
        kind_known = true;
        if (!width) width = m.at("width").get<std::size_t>();
        ds.length = m.at("length").get<std::size_t>();
        length_known = true;
        continue;
      }
      if (rec.contains("tokens")) {
        if (kind_known && ds.kind != DatasetKind::discrete) parse_fail(line, "token record in a frame dataset");
        ds.kind = DatasetKind::discrete;
        kind_known = true;
        auto seq = rec.at("tokens").get<std::vector<std::int64_t>>();
        TokenSeq tokens;
        for (std::int64_t t : seq) {
          if (t < 0) parse_fail(line, "negative token");
          if (width && static_cast<std::size_t>(t) >= *width) {
            parse_fail(line, "token " + std::to_string(t) + " outside alphabet of size " + std::to_string(*width));
          }
          max_token = std::max(max_token, static_cast<std::size_t>(t));
          tokens.push_back(static_cast<std::size_t>(t));
        }
        if (!length_known) {
          ds.length = tokens.size();
          length_known = true;
        }
        if (tokens.size() != ds.length) parse_fail(line, "sequence length differs from " + std::to_string(ds.length));
        ds.tokens.push_back(std::move(tokens));
      } else if (rec.contains("frames")) {
        if (kind_known && ds.kind != DatasetKind::continuous) parse_fail(line, "frame record in a token dataset");
        ds.kind = DatasetKind::continuous;
        kind_known = true;
        auto frames = rec.at("frames").get<std::vector<std::vector<double>>>();
        if (!length_known) {
          ds.length = frames.size();
          length_known = true;
        }
        if (frames.size() != ds.length) parse_fail(line, "sequence length differs from " + std::to_string(ds.length));
        for (const auto& f : frames) {
          if (!width) width = f.size();
          if (f.size() != *width) parse_fail(line, "frame width differs from " + std::to_string(*width));
        }
        ds.frames.push_back(std::move(frames));
      } else {
        parse_fail(line, "record has neither \"tokens\" nor \"frames\"");
      }
    } catch (const json::exception& e) {
      parse_fail(line, e.what());
    }
  }
  if (width) {
    ds.width = *width;
  } else if (!ds.tokens.empty()) {
    ds.width = max_token + 1;
  }
  return ds;
}

void save_dataset(const std::string& path, const SequenceDataset& dataset) {
  dataset.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write dataset " + path);
  json meta = {{"meta",
                {{"kind", dataset.kind == DatasetKind::discrete ? "discrete" : "continuous"},
                 {"width", dataset.width},
                 {"length", dataset.length}}}};
  out << meta.dump() << "\n";
  if (dataset.kind == DatasetKind::discrete) {
    for (const auto& seq : dataset.tokens) out << json{{"tokens", seq}}.dump() << "\n";
  } else {
    for (const auto& seq : dataset.frames) out << json{{"frames", seq}}.dump() << "\n";
  }
  require(static_cast<bool>(out), ErrorKind::io, "failed writing dataset " + path);
}

}  // namespace agg::synth

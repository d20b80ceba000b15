#include "cbmshift/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace cbmshift {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, int line_no, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw InputError("line " + std::to_string(line_no) + ": non-numeric cell '" + cell +
                     "' in column " + column);
  }
  return value;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

void check_unique_nonempty(const std::vector<std::string>& names, const char* what,
                           size_t min_count) {
  if (names.size() < min_count) {
    throw InputError(std::string(what) + " vocabulary needs at least " +
                     std::to_string(min_count) + " names, got " + std::to_string(names.size()));
  }
  std::set<std::string> seen;
  for (const auto& name : names) {
    if (name.empty()) throw InputError(std::string(what) + " vocabulary contains an empty name");
    if (!seen.insert(name).second) {
      throw InputError(std::string(what) + " vocabulary has duplicate name '" + name + "'");
    }
  }
}

std::vector<std::string> read_vocab_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open vocabulary file: " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Split> split_from_string(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  return std::nullopt;
}

ConceptVocabulary::ConceptVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  check_unique_nonempty(names_, "concept", 1);
}

int ConceptVocabulary::index_of(std::string_view name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

ClassVocabulary::ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
  check_unique_nonempty(names_, "class", 2);
}

int ClassVocabulary::index_of(std::string_view name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

ConceptVocabulary load_concept_vocabulary(const std::filesystem::path& path) {
  return ConceptVocabulary(read_vocab_lines(path));
}

ClassVocabulary load_class_vocabulary(const std::filesystem::path& path) {
  return ClassVocabulary(read_vocab_lines(path));
}

void write_vocabulary(std::span<const std::string> names, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write vocabulary file: " + path.string());
  for (const auto& name : names) out << name << "\n";
}

const std::vector<Sample>& SplitDataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

std::vector<Sample>& SplitDataset::split(Split s) {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

void SplitDataset::require_class_coverage() const {
  const int k = classes.size();
  for (Split s : {Split::train, Split::val, Split::test}) {
    const auto& samples = split(s);
    if (samples.empty()) continue;
    std::vector<int> counts(static_cast<size_t>(k), 0);
    for (const auto& sample : samples) counts[static_cast<size_t>(sample.class_label)]++;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<size_t>(c)] == 0) {
        throw InputError("split '" + std::string(to_string(s)) + "' has no sample of class '" +
                         classes.name(c) + "'");
      }
    }
  }
}

SplitDataset load_samples_csv(const std::filesystem::path& path,
                              const ConceptVocabulary& concepts,
                              const ClassVocabulary& classes) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open samples CSV: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw InputError("empty samples CSV: " + path.string());
  const auto header = split_line(strip_cr(line));

  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "split" ||
      header[2] != "class") {
    throw InputError("samples CSV header must start with sample_id,split,class");
  }

  // The feature block x_0..x_{d-1} comes first, then the concept block
  // c_0..c_{L-1}; either block may be absent but not both.
  size_t pos = 3;
  int feature_dim = 0;
  while (pos < header.size() && header[pos] == "x_" + std::to_string(feature_dim)) {
    ++feature_dim;
    ++pos;
  }
  int concept_cols = 0;
  while (pos < header.size() && header[pos] == "c_" + std::to_string(concept_cols)) {
    ++concept_cols;
    ++pos;
  }
  if (pos != header.size()) {
    throw InputError("samples CSV header has unexpected column '" + header[pos] + "'");
  }
  const int num_concepts = concepts.size();
  if (concept_cols != 0 && concept_cols != num_concepts) {
    throw InputError("samples CSV concept block has " + std::to_string(concept_cols) +
                     " columns, expected " + std::to_string(num_concepts) +
                     "; missing column c_" + std::to_string(concept_cols));
  }
  if (feature_dim == 0 && concept_cols == 0) {
    throw InputError("samples CSV has neither a feature block nor a concept block");
  }

  SplitDataset dataset;
  dataset.concepts = concepts;
  dataset.classes = classes;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }

    Sample sample;
    sample.sample_id = cells[0];
    const auto split = split_from_string(cells[1]);
    if (!split) {
      throw InputError("line " + std::to_string(line_no) + ": unknown split '" + cells[1] + "'");
    }
    sample.class_label = classes.index_of(cells[2]);
    if (sample.class_label < 0) {
      throw InputError("line " + std::to_string(line_no) + ": unknown class name '" + cells[2] +
                       "'");
    }

    size_t cell = 3;
    if (feature_dim > 0) {
      std::vector<double> features(static_cast<size_t>(feature_dim));
      for (int i = 0; i < feature_dim; ++i, ++cell) {
        features[static_cast<size_t>(i)] =
            parse_number(cells[cell], line_no, "x_" + std::to_string(i));
      }
      sample.features = std::move(features);
    }
    if (concept_cols > 0) {
      std::vector<double> labels(static_cast<size_t>(concept_cols));
      for (int i = 0; i < concept_cols; ++i, ++cell) {
        const double v = parse_number(cells[cell], line_no, "c_" + std::to_string(i));
        if (v != 0.0 && v != 1.0) {
          throw InputError("line " + std::to_string(line_no) + ": concept label c_" +
                           std::to_string(i) + " must be 0 or 1, got " + cells[cell]);
        }
        labels[static_cast<size_t>(i)] = v;
      }
      sample.concept_labels = std::move(labels);
    }
    dataset.split(*split).push_back(std::move(sample));
  }
  return dataset;
}

void write_samples_csv(const SplitDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write samples CSV: " + path.string());

  int feature_dim = 0;
  bool has_concepts = false;
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (const auto& sample : dataset.split(s)) {
      if (sample.features) feature_dim = static_cast<int>(sample.features->size());
      if (sample.concept_labels) has_concepts = true;
    }
  }

  out << "sample_id,split,class";
  for (int i = 0; i < feature_dim; ++i) out << ",x_" << i;
  if (has_concepts) {
    for (int i = 0; i < dataset.concepts.size(); ++i) out << ",c_" << i;
  }
  out << "\n";

  char buffer[64];
  for (Split s : {Split::train, Split::val, Split::test}) {
    for (const auto& sample : dataset.split(s)) {
      out << sample.sample_id << ',' << to_string(s) << ','
          << dataset.classes.name(sample.class_label);
      if (feature_dim > 0) {
        for (int i = 0; i < feature_dim; ++i) {
          std::snprintf(buffer, sizeof(buffer), "%.9f", (*sample.features)[static_cast<size_t>(i)]);
          out << ',' << buffer;
        }
      }
      if (has_concepts) {
        for (int i = 0; i < dataset.concepts.size(); ++i) {
          std::snprintf(buffer, sizeof(buffer), "%.9f",
                        (*sample.concept_labels)[static_cast<size_t>(i)]);
          out << ',' << buffer;
        }
      }
      out << "\n";
    }
  }
}

std::vector<ActivationRecord> load_activations_csv(const std::filesystem::path& path,
                                                   const ConceptVocabulary& concepts,
                                                   const ClassVocabulary& classes) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open activations CSV: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw InputError("empty activations CSV: " + path.string());
  const auto header = split_line(strip_cr(line));
  const int num_concepts = concepts.size();

  std::vector<std::string> expected = {"sample_id", "split", "class"};
  for (int i = 0; i < num_concepts; ++i) expected.push_back("a_" + std::to_string(i));
  if (header != expected) {
    std::string missing;
    for (size_t i = 0; i < expected.size(); ++i) {
      if (i >= header.size() || header[i] != expected[i]) {
        missing = expected[i];
        break;
      }
    }
    throw InputError("activations CSV header mismatch; expected column '" + missing + "'");
  }

  constexpr double kTolerance = 1e-9;
  std::vector<ActivationRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != expected.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(expected.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }

    ActivationRecord record;
    record.sample_id = cells[0];
    const auto split = split_from_string(cells[1]);
    if (!split) {
      throw InputError("line " + std::to_string(line_no) + ": unknown split '" + cells[1] + "'");
    }
    record.split = *split;
    record.class_label = classes.index_of(cells[2]);
    if (record.class_label < 0) {
      throw InputError("line " + std::to_string(line_no) + ": unknown class name '" + cells[2] +
                       "'");
    }
    record.activations.resize(static_cast<size_t>(num_concepts));
    for (int i = 0; i < num_concepts; ++i) {
      const double v = parse_number(cells[3 + static_cast<size_t>(i)], line_no,
                                    "a_" + std::to_string(i));
      if (v < -kTolerance || v > 1.0 + kTolerance || !std::isfinite(v)) {
        throw InputError("line " + std::to_string(line_no) + ": activation for concept '" +
                         concepts.name(i) + "' out of [0,1]: " + cells[3 + static_cast<size_t>(i)]);
      }
      record.activations[static_cast<size_t>(i)] = clamp01(v);
    }
    records.push_back(std::move(record));
  }
  return records;
}

void write_activations_csv(std::span<const ActivationRecord> records,
                           const std::filesystem::path& path,
                           const ConceptVocabulary& concepts,
                           const ClassVocabulary& classes) {
  const int num_concepts = concepts.size();
  for (const auto& record : records) {
    if (static_cast<int>(record.activations.size()) != num_concepts) {
      throw InputError("activation record '" + record.sample_id + "' has " +
                       std::to_string(record.activations.size()) + " values, expected " +
                       std::to_string(num_concepts));
    }
  }

  std::ofstream out(path);
  if (!out) throw InputError("cannot write activations CSV: " + path.string());
  out << "sample_id,split,class";
  for (int i = 0; i < num_concepts; ++i) out << ",a_" << i;
  out << "\n";

  char buffer[32];
  for (const auto& record : records) {
    out << record.sample_id << ',' << to_string(record.split) << ','
        << classes.name(record.class_label);
    for (double a : record.activations) {
      std::snprintf(buffer, sizeof(buffer), "%.9f", a);
      out << ',' << buffer;
    }
    out << "\n";
  }
}

}  // namespace cbmshift

#include "cbmshift/concept_memory.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace cbmshift {

using nlohmann::json;

namespace {
constexpr const char* kMemoryVersion = "memory-v1";

bool selected(const MemorySplits& splits, Split split) {
  return (split == Split::val && splits.use_val) || (split == Split::train && splits.use_train);
}
}  // namespace

ConceptMemory build_memory(std::span<const ActivationRecord> records, int num_classes,
                           int num_concepts, const MemorySplits& splits) {
  if (num_classes < 2 || num_concepts < 1) {
    throw InputError("memory needs at least 2 classes and 1 concept");
  }

  ConceptMemory memory;
  memory.num_classes = num_classes;
  memory.num_concepts = num_concepts;
  memory.means = Matrix(num_classes, num_concepts);
  memory.stds = Matrix(num_classes, num_concepts);
  memory.counts.assign(static_cast<size_t>(num_classes), 0);

  for (const auto& record : records) {
    if (!selected(splits, record.split)) continue;
    if (record.class_label < 0 || record.class_label >= num_classes) {
      throw InputError("activation record '" + record.sample_id + "' class label out of range");
    }
    if (static_cast<int>(record.activations.size()) != num_concepts) {
      throw InputError("activation record '" + record.sample_id + "' length mismatch");
    }
    memory.counts[static_cast<size_t>(record.class_label)]++;
    for (int i = 0; i < num_concepts; ++i) {
      memory.means(record.class_label, i) += record.activations[static_cast<size_t>(i)];
    }
  }

  for (int k = 0; k < num_classes; ++k) {
    if (memory.counts[static_cast<size_t>(k)] == 0) {
      throw InputError("no validation activation records for class index " + std::to_string(k));
    }
    const double n = static_cast<double>(memory.counts[static_cast<size_t>(k)]);
    for (int i = 0; i < num_concepts; ++i) memory.means(k, i) /= n;
  }

  // Second pass for the population standard deviation (divide by the count).
  for (const auto& record : records) {
    if (!selected(splits, record.split)) continue;
    for (int i = 0; i < num_concepts; ++i) {
      const double d =
          record.activations[static_cast<size_t>(i)] - memory.means(record.class_label, i);
      memory.stds(record.class_label, i) += d * d;
    }
  }
  for (int k = 0; k < num_classes; ++k) {
    const double n = static_cast<double>(memory.counts[static_cast<size_t>(k)]);
    for (int i = 0; i < num_concepts; ++i) {
      memory.stds(k, i) = std::sqrt(memory.stds(k, i) / n);
    }
  }
  return memory;
}

void save_memory(const ConceptMemory& memory, const std::filesystem::path& path) {
  json means = json::array();
  json stds = json::array();
  for (int k = 0; k < memory.num_classes; ++k) {
    json mean_row = json::array();
    json std_row = json::array();
    for (int i = 0; i < memory.num_concepts; ++i) {
      mean_row.push_back(memory.means(k, i));
      std_row.push_back(memory.stds(k, i));
    }
    means.push_back(std::move(mean_row));
    stds.push_back(std::move(std_row));
  }
  const json j{
      {"version", kMemoryVersion}, {"K", memory.num_classes},     {"L", memory.num_concepts},
      {"means", std::move(means)}, {"stds", std::move(stds)},     {"counts", memory.counts},
  };
  std::ofstream out(path);
  if (!out) throw InputError("cannot write memory file: " + path.string());
  out << j.dump(2) << "\n";
}

ConceptMemory load_memory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open memory file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed memory file: ") + e.what());
  }
  if (j.value("version", "") != kMemoryVersion) {
    throw InputError("memory file version mismatch; expected " + std::string(kMemoryVersion));
  }

  ConceptMemory memory;
  memory.num_classes = j.at("K").get<int>();
  memory.num_concepts = j.at("L").get<int>();
  memory.counts = j.at("counts").get<std::vector<long>>();
  const auto& means = j.at("means");
  const auto& stds = j.at("stds");
  if (static_cast<int>(means.size()) != memory.num_classes ||
      static_cast<int>(stds.size()) != memory.num_classes ||
      static_cast<int>(memory.counts.size()) != memory.num_classes) {
    throw InputError("memory file class count mismatch");
  }
  memory.means = Matrix(memory.num_classes, memory.num_concepts);
  memory.stds = Matrix(memory.num_classes, memory.num_concepts);
  for (int k = 0; k < memory.num_classes; ++k) {
    if (static_cast<int>(means[static_cast<size_t>(k)].size()) != memory.num_concepts ||
        static_cast<int>(stds[static_cast<size_t>(k)].size()) != memory.num_concepts) {
      throw InputError("memory file concept count mismatch in class " + std::to_string(k));
    }
    for (int i = 0; i < memory.num_concepts; ++i) {
      memory.means(k, i) = means[static_cast<size_t>(k)][static_cast<size_t>(i)].get<double>();
      memory.stds(k, i) = stds[static_cast<size_t>(k)][static_cast<size_t>(i)].get<double>();
      if (!(memory.means(k, i) >= 0.0 && memory.means(k, i) <= 1.0) ||
          !(memory.stds(k, i) >= 0.0)) {
        throw InputError("memory file has out-of-range statistics");
      }
    }
    if (memory.counts[static_cast<size_t>(k)] < 1) {
      throw InputError("memory file has an empty class at index " + std::to_string(k));
    }
  }
  return memory;
}

}  // namespace cbmshift

#include "medrank/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace medrank {

using ordered_json = nlohmann::ordered_json;

std::size_t DatasetInstance::positive_index() const {
  std::size_t found = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      if (found != labels.size()) throw std::invalid_argument("instance has more than one positive");
      found = i;
    }
  }
  if (found == labels.size()) throw std::invalid_argument("instance has no positive");
  return found;
}

void DatasetInstance::validate() const {
  if (candidates.size() < 2) throw std::invalid_argument("instance needs at least 2 candidates");
  if (labels.size() != candidates.size()) {
    throw std::invalid_argument("labels and candidates differ in length");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
  }
  positive_index();
}

void write_dataset(const Dataset& data, std::ostream& out) {
  for (const auto& inst : data) {
    ordered_json j;
    j["q"] = inst.q;
    j["candidates"] = inst.candidates;
    j["labels"] = inst.labels;
    j["positive_smns"] = inst.positive_smns;
    j["source"] = inst.source;
    out << j.dump() << '\n';
  }
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  write_dataset(data, out);
  if (!out) throw std::runtime_error("failed writing dataset " + path.string());
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      DatasetInstance inst;
      j.at("q").get_to(inst.q);
      j.at("candidates").get_to(inst.candidates);
      j.at("labels").get_to(inst.labels);
      if (j.contains("positive_smns")) j.at("positive_smns").get_to(inst.positive_smns);
      if (j.contains("source")) j.at("source").get_to(inst.source);
      inst.validate();
      data.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace medrank

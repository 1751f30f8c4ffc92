// Builds the bundled toy word vectors. Every therapeutic area of the toy corpus
// gets a random prototype direction; a token's vector is the count-weighted mix
// of the prototypes of the areas whose entity phrases or generic names contain
// it, plus a token-specific random component. Tokens that never occur inside
// an entity or a name get only the random component. The result mimics the
// topical structure of pretrained biomedical word vectors at toy scale.
//
// usage: make_toy_embeddings CORPUS GAZETTEER DISTRACTORS OUT [DIM] [SEED]

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "medrank/embeddings.hpp"
#include "medrank/entities.hpp"

using namespace medrank;

int main(int argc, char** argv) {
  if (argc < 5) {
    std::cerr << "usage: make_toy_embeddings CORPUS GAZETTEER DISTRACTORS OUT [DIM] [SEED]\n";
    return 2;
  }
  const std::size_t dim = argc > 5 ? std::stoul(argv[5]) : 32;
  const std::uint64_t seed = argc > 6 ? std::stoull(argv[6]) : 2020;
  constexpr double kNameWeight = 3.0;
  constexpr double kSpecific = 0.5;
  constexpr double kNoise = 0.8;

  const Gazetteer gaz = load_gazetteer(argv[2]);
  std::set<std::string> vocab;
  std::map<std::string, std::map<std::string, double>> area_counts;
  std::vector<std::string> areas;

  std::ifstream corpus(argv[1]);
  std::string line;
  while (std::getline(corpus, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto area = j.at("area").get<std::string>();
    if (std::find(areas.begin(), areas.end(), area) == areas.end()) areas.push_back(area);
    const auto uses = j.at("uses").get<std::string>();
    for (const auto& t : tokenize(uses)) vocab.insert(t);
    for (const auto& t : tokenize(j.at("generic_name").get<std::string>())) {
      vocab.insert(t);
      area_counts[t][area] += kNameWeight;
    }
    for (const auto& span : extract_entities(uses, gaz)) {
      for (const auto& t : tokenize(span.text)) area_counts[t][area] += 1.0;
    }
  }
  std::ifstream gaz_in(argv[2]);
  while (std::getline(gaz_in, line)) {
    if (line.empty()) continue;
    for (const auto& t : tokenize(nlohmann::json::parse(line).at("phrase").get<std::string>())) {
      vocab.insert(t);
    }
  }
  std::ifstream distractors(argv[3]);
  while (std::getline(distractors, line)) {
    for (const auto& t : tokenize(line)) vocab.insert(t);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  const auto random_vec = [&] {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    return v;
  };
  const auto unit = [](std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    for (double& x : v) x /= std::sqrt(s);
    return v;
  };

  std::map<std::string, std::vector<double>> prototypes;
  for (const auto& a : areas) prototypes[a] = unit(random_vec());

  EmbeddingTable table(dim);
  for (const auto& token : vocab) {
    std::vector<double> v = random_vec();
    auto it = area_counts.find(token);
    if (it == area_counts.end()) {
      for (double& x : v) x *= kNoise;
    } else {
      std::vector<double> mix(dim, 0.0);
      for (const auto& [area, count] : it->second) {
        for (std::size_t k = 0; k < dim; ++k) mix[k] += count * prototypes[area][k];
      }
      mix = unit(mix);
      for (std::size_t k = 0; k < dim; ++k) v[k] = mix[k] + kSpecific * v[k];
    }
    table.insert(token, v);
  }
  save_embeddings(table, argv[4]);
  std::cerr << "wrote " << table.size() << " vectors of dimension " << dim << '\n';
  return 0;
}

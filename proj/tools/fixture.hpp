#pragma once

// Deterministic synthetic caption world: tagged image collection, query
// images, generator k-best lists, references, label distributions, word
// vectors and a concept hierarchy. Everything derives from one seed through
// mt19937_64 with hand-rolled draws, so output bytes are platform stable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "conceptrank/io.hpp"

namespace fixture {

namespace fs = std::filesystem;
using conceptrank::io::ordered_json;

struct Config {
  std::size_t queries = 50;
  std::size_t collection = 300;
  std::size_t dim = 16;
  std::size_t k = 5;
  std::size_t embed_dim = 8;
  double feature_noise = 0.35;
  std::uint64_t seed = 7;
  // Planted mode: the faithful candidate always sits at index `planted_rank`,
  // distractors never mention a true object, and planted_concepts.jsonl
  // lists each image's true objects.
  bool planted = false;
  std::size_t planted_rank = 1;
};

struct Object {
  const char* name;
  const char* category;
};

inline constexpr std::array<Object, 20> kObjects{{
    {"dog", "animal"},      {"cat", "animal"},        {"horse", "animal"},
    {"sheep", "animal"},    {"bird", "animal"},       {"elephant", "animal"},
    {"giraffe", "animal"},  {"zebra", "animal"},      {"plane", "vehicle"},
    {"bus", "vehicle"},     {"train", "vehicle"},     {"boat", "vehicle"},
    {"bicycle", "vehicle"}, {"kite", "thing"},        {"pizza", "food"},
    {"cake", "food"},       {"clock", "thing"},       {"umbrella", "thing"},
    {"fire hydrant", "thing"}, {"teddy bear", "thing"},
}};

inline constexpr std::array<const char*, 6> kNoiseTags{"photo", "outdoor", "day",
                                                       "color", "street", "nature"};
inline constexpr std::array<const char*, 5> kVerbs{"standing in", "sitting on", "next to",
                                                   "resting on", "seen near"};
inline constexpr std::array<const char*, 6> kPlaces{"the grass", "a field", "the street",
                                                    "a table", "the water", "a building"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::size_t below(std::size_t n) {
    const std::uint64_t bound = n, floor = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= floor) return static_cast<std::size_t>(r % bound);
    }
  }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  // Irwin-Hall approximation; exact normality is irrelevant here.
  double noise() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0;
  }

 private:
  std::mt19937_64 gen_;
};

inline double round_to(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(v * scale) / scale;
}

inline std::string fixed(double v, int digits) { return conceptrank::io::fixed(v, digits); }

struct Scene {
  std::vector<std::size_t> objects;
  std::size_t verb = 0, place = 0;
};

inline std::string with_article(const char* name) {
  return (std::string("aeiou").find(name[0]) == std::string::npos ? "a " : "an ") +
         std::string(name);
}

inline std::string describe(const Scene& s) {
  std::string text = with_article(kObjects[s.objects[0]].name);
  for (std::size_t i = 1; i < s.objects.size(); ++i)
    text += " and " + with_article(kObjects[s.objects[i]].name);
  return text + " " + kVerbs[s.verb] + " " + kPlaces[s.place];
}

class World {
 public:
  explicit World(const Config& cfg) : cfg_(cfg), rng_(cfg.seed) {
    for (std::size_t o = 0; o < kObjects.size(); ++o) {
      std::vector<double> proto(cfg.dim);
      for (auto& x : proto) x = rng_.noise();
      prototypes_.push_back(std::move(proto));
    }
  }

  void write(const fs::path& dir) {
    fs::create_directories(dir);
    write_collection(dir);
    write_queries(dir);
    write_hierse_inputs(dir);
  }

 private:
  Scene random_scene() {
    Scene s;
    s.objects.push_back(rng_.below(kObjects.size()));
    if (rng_.uniform() < 0.25) {
      std::size_t second = rng_.below(kObjects.size());
      if (second != s.objects[0]) s.objects.push_back(second);
    }
    s.verb = rng_.below(kVerbs.size());
    s.place = rng_.below(kPlaces.size());
    return s;
  }

  std::string feature_line(const std::string& id, const Scene& s) {
    std::string line = id + "\t";
    for (std::size_t d = 0; d < cfg_.dim; ++d) {
      double v = 0.0;
      for (auto o : s.objects) v += prototypes_[o][d];
      v += cfg_.feature_noise * rng_.noise();
      if (d) line += ' ';
      line += fixed(v, 5);
    }
    return line + "\n";
  }

  static std::string id_of(char prefix, std::size_t i) {
    std::string n = std::to_string(i);
    return std::string(1, prefix) + std::string(4 - std::min<std::size_t>(4, n.size()), '0') + n;
  }

  void write_collection(const fs::path& dir) {
    std::ofstream features(dir / "collection.tsv", std::ios::binary);
    std::ofstream tags(dir / "tags.jsonl", std::ios::binary);
    for (std::size_t i = 0; i < cfg_.collection; ++i) {
      const std::string id = id_of('c', i);
      const Scene s = random_scene();
      features << feature_line(id, s);
      ordered_json record;
      record["image_id"] = id;
      record["tags"] = ordered_json::array();
      for (auto o : s.objects) record["tags"].push_back(kObjects[o].name);
      for (const char* t : kNoiseTags) {
        if (rng_.uniform() < 0.3) record["tags"].push_back(t);
      }
      tags << record.dump() << '\n';
    }
  }

  void write_queries(const fs::path& dir) {
    std::ofstream features(dir / "queries.tsv", std::ios::binary);
    std::ofstream kbest(dir / "kbest.jsonl", std::ios::binary);
    std::ofstream refs(dir / "references.jsonl", std::ios::binary);
    std::ofstream labels(dir / "labels.jsonl", std::ios::binary);
    std::ofstream ids(dir / "ids.txt", std::ios::binary);
    std::ofstream planted;
    if (cfg_.planted) planted.open(dir / "planted_concepts.jsonl", std::ios::binary);
    for (std::size_t i = 0; i < cfg_.queries; ++i) {
      const std::string id = id_of('q', i);
      const Scene truth = random_scene();
      ids << id << '\n';
      features << feature_line(id, truth);

      ordered_json ref;
      ref["image_id"] = id;
      ref["references"] = ordered_json::array();
      ref["references"].push_back(describe(truth));
      Scene alt = truth;
      alt.verb = (truth.verb + 1) % kVerbs.size();
      ref["references"].push_back(describe(alt));
      ref["references"].push_back("there is " + with_article(kObjects[truth.objects[0]].name) +
                                  " in the picture");
      refs << ref.dump() << '\n';

      // One faithful candidate at a random rank; the rest swap the object or
      // the setting. Scores strictly decrease and carry four decimals.
      const std::size_t correct = cfg_.planted ? cfg_.planted_rank : rng_.below(cfg_.k);
      std::vector<std::string> texts;
      for (std::size_t r = 0; r < cfg_.k; ++r) {
        Scene c = truth;
        if (r != correct) {
          if (cfg_.planted) {
            std::size_t o = rng_.below(kObjects.size());
            while (std::find(truth.objects.begin(), truth.objects.end(), o) != truth.objects.end())
              o = rng_.below(kObjects.size());
            c.objects.assign(1, o);
          } else if (rng_.uniform() < 0.7) {
            c.objects.assign(1, (truth.objects[0] + 1 + rng_.below(kObjects.size() - 1)) %
                                    kObjects.size());
          } else {
            c.place = (truth.place + 1 + rng_.below(kPlaces.size() - 1)) % kPlaces.size();
          }
        }
        std::string text = describe(c);
        if (std::find(texts.begin(), texts.end(), text) != texts.end()) text += " outside";
        texts.push_back(text);
      }
      ordered_json list;
      list["image_id"] = id;
      list["candidates"] = ordered_json::array();
      double score = -(0.5 + rng_.uniform());
      for (std::size_t r = 0; r < cfg_.k; ++r) {
        ordered_json item;
        item["text"] = texts[r];
        item["score"] = round_to(score, 4);
        list["candidates"].push_back(std::move(item));
        score -= 0.05 + 0.3 * rng_.uniform();
      }
      kbest << list.dump() << '\n';

      if (cfg_.planted) {
        ordered_json rec;
        rec["image_id"] = id;
        rec["concepts"] = ordered_json::array();
        for (auto o : truth.objects) {
          ordered_json item;
          item["term"] = kObjects[o].name;
          item["confidence"] = 0.9;
          rec["concepts"].push_back(std::move(item));
        }
        planted << rec.dump() << '\n';
      }

      ordered_json lab;
      lab["image_id"] = id;
      lab["labels"] = ordered_json::array();
      double mass = 1.0;
      for (auto o : truth.objects) {
        const double p = round_to(0.35 + 0.2 * rng_.uniform(), 4);
        mass -= p;
        ordered_json item;
        item["term"] = synset(o, rng_.below(2));
        item["prob"] = p;
        lab["labels"].push_back(std::move(item));
      }
      for (int n = 0; n < 3; ++n) {
        const std::size_t o = rng_.below(kObjects.size());
        ordered_json item;
        item["term"] = synset(o, rng_.below(2));
        item["prob"] = round_to(std::max(0.0, mass) * 0.2 * rng_.uniform(), 4);
        lab["labels"].push_back(std::move(item));
      }
      labels << lab.dump() << '\n';
    }
  }

  static std::string synset(std::size_t object, std::size_t variant) {
    std::string name = kObjects[object].name;
    std::replace(name.begin(), name.end(), ' ', '_');
    return "syn_" + name + "_" + std::to_string(variant);
  }

  void write_hierse_inputs(const fs::path& dir) {
    std::map<std::string, std::vector<double>> vectors;
    std::map<std::string, std::vector<double>> category_vec;
    auto random_vec = [&] {
      std::vector<double> v(cfg_.embed_dim);
      for (auto& x : v) x = rng_.noise();
      return v;
    };
    for (const auto& o : kObjects) {
      if (!category_vec.count(o.category)) category_vec[o.category] = random_vec();
    }
    for (const auto& [name, v] : category_vec) vectors[name] = v;
    vectors["entity"] = random_vec();
    for (const auto& o : kObjects) {
      // Multi-word concepts have no single-token vector.
      if (std::string(o.name).find(' ') != std::string::npos) continue;
      auto v = random_vec();
      const auto& c = category_vec[o.category];
      for (std::size_t d = 0; d < v.size(); ++d) v[d] = 0.6 * v[d] + 0.8 * c[d];
      vectors[o.name] = std::move(v);
    }

    std::ofstream emb(dir / "embeddings.txt", std::ios::binary);
    emb << vectors.size() << ' ' << cfg_.embed_dim << '\n';
    for (const auto& [term, v] : vectors) {
      emb << term;
      for (double x : v) emb << ' ' << fixed(x, 6);
      emb << '\n';
    }

    std::ofstream hier(dir / "hierarchy.tsv", std::ios::binary);
    std::map<std::string, std::string> links;
    for (std::size_t o = 0; o < kObjects.size(); ++o) {
      std::string name = kObjects[o].name;
      for (std::size_t v = 0; v < 2; ++v) links[synset(o, v)] = name;
      links[name] = kObjects[o].category;
    }
    for (const auto& [name, _] : category_vec) links[name] = "entity";
    for (const auto& [child, parent] : links) hier << child << '\t' << parent << '\n';

    std::ofstream vocab(dir / "vocab.txt", std::ios::binary);
    for (const auto& o : kObjects) vocab << o.name << '\n';
  }

  Config cfg_;
  Rng rng_;
  std::vector<std::vector<double>> prototypes_;
};

inline void generate(const Config& cfg, const fs::path& dir) { World(cfg).write(dir); }

}  // namespace fixture

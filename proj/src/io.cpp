// SPDX-License-Identifier: Apache-2.0
#include "grace/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace grace::io {

using nlohmann::json;

void for_each_jsonl(const std::string& path, const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void write_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const std::string& path, const std::vector<json>& records) {
  std::string text;
  for (const auto& r : records) {
    text += r.dump();
    text += '\n';
  }
  write_text(path, text);
}

Catalog read_catalog(const std::string& path) {
  std::vector<Item> items;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    Item it;
    it.item_id = j.at("item_id").get<std::string>();
    it.embedding = j.at("embedding").get<std::vector<double>>();
    it.product_type = j.value("product_type", std::string{});
    it.brand = j.value("brand", std::string{});
    it.price = j.at("price").get<double>();
    if (it.embedding.empty()) throw ValidationError("item " + it.item_id + " has an empty embedding");
    items.push_back(std::move(it));
  });
  return Catalog(std::move(items));
}

void write_catalog(const std::string& path, const Catalog& catalog) {
  std::vector<json> recs;
  recs.reserve(catalog.size());
  for (const auto& it : catalog.items()) {
    recs.push_back({{"item_id", it.item_id},
                    {"embedding", it.embedding},
                    {"product_type", it.product_type},
                    {"brand", it.brand},
                    {"price", it.price}});
  }
  write_jsonl(path, recs);
}

std::vector<UserSequence> read_interactions(const std::string& path) {
  std::vector<UserSequence> seqs;
  std::unordered_map<std::string, std::size_t> slot;
  for_each_jsonl(path, [&](const json& j, std::size_t) {
    const auto user = j.at("user_id").get<std::string>();
    const auto name = j.at("behavior").get<std::string>();
    const auto behavior = parse_behavior(name);
    if (!behavior) throw ValidationError("unknown behavior '" + name + "'");
    auto [it, inserted] = slot.try_emplace(user, seqs.size());
    if (inserted) seqs.push_back({user, {}});
    seqs[it->second].interactions.push_back(
        {j.at("item_id").get<std::string>(), *behavior, j.at("ordinal").get<std::int64_t>()});
  });
  for (auto& s : seqs) {
    std::stable_sort(s.interactions.begin(), s.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.ordinal < b.ordinal; });
    for (std::size_t i = 1; i < s.interactions.size(); ++i) {
      if (s.interactions[i].ordinal == s.interactions[i - 1].ordinal)
        throw ValidationError(path + ": user " + s.user_id + " has duplicate ordinal " +
                              std::to_string(s.interactions[i].ordinal));
    }
  }
  return seqs;
}

void write_interactions(const std::string& path, const std::vector<UserSequence>& seqs) {
  std::vector<json> recs;
  for (const auto& s : seqs) {
    for (const auto& x : s.interactions) {
      recs.push_back({{"user_id", s.user_id},
                      {"item_id", x.item_id},
                      {"behavior", std::string(behavior_name(x.behavior))},
                      {"ordinal", x.ordinal}});
    }
  }
  write_jsonl(path, recs);
}

}  // namespace grace::io

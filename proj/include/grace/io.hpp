// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grace/core.hpp"

namespace grace::io {

/// Calls `fn(record, line_number)` for each non-blank line. Parse failures
/// raise ValidationError carrying "path:line".
void for_each_jsonl(const std::string& path, const std::function<void(const nlohmann::json&, std::size_t)>& fn);

/// Writes records one per line; the file is replaced atomically-ish (write then rename).
void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& records);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// Catalog: {item_id, embedding:[...], product_type, brand, price}
Catalog read_catalog(const std::string& path);
void write_catalog(const std::string& path, const Catalog& catalog);

// Interactions: {user_id, item_id, behavior, ordinal}. Sequences come back
// in order of first appearance, interactions sorted by ordinal.
std::vector<UserSequence> read_interactions(const std::string& path);
void write_interactions(const std::string& path, const std::vector<UserSequence>& seqs);

}  // namespace grace::io

#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "asam/linalg.hpp"

namespace asam::io {

using nlohmann::json;

json to_json(const Vector& v);
/// Row-major nested arrays.
json to_json(const Matrix& m);

/// `field` names the location used in error messages, e.g. "units[3].concept_v".
Vector vector_from_json(const json& j, const std::string& field);
Matrix matrix_from_json(const json& j, const std::string& field);

/// Typed member lookup; throws ValidationError naming `field` when absent or mistyped.
const json& member(const json& obj, const char* key, const std::string& field);
double number_member(const json& obj, const char* key, const std::string& field);
long long integer_member(const json& obj, const char* key, const std::string& field);

/// Parse with line/column context on failure. A missing file is a ConfigError.
json read_json_file(const std::filesystem::path& path);
json parse_json_text(const std::string& text, const std::string& origin);

/// Throws IoError on failure. Parent directories are created.
void write_text_file(const std::filesystem::path& path, const std::string& content);
void write_json_file(const std::filesystem::path& path, const json& doc);

}  // namespace asam::io

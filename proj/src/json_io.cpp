#include "asam/json_io.hpp"

#include <fstream>
#include <sstream>

#include "asam/errors.hpp"

namespace asam::io {

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ValidationError(field + "[" + std::to_string(i) + "]: expected a number");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw ValidationError(field + ": expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::string where = field + "[" + std::to_string(i) + "]";
    const Vector row = vector_from_json(j[static_cast<std::size_t>(i)], where);
    if (row.size() != cols) throw ValidationError(where + ": ragged row");
    m.row(i) = row.transpose();
  }
  return m;
}

const json& member(const json& obj, const char* key, const std::string& field) {
  if (!obj.is_object()) throw ValidationError(field + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(field + "." + key + ": missing");
  return *it;
}

double number_member(const json& obj, const char* key, const std::string& field) {
  const json& v = member(obj, key, field);
  if (!v.is_number()) throw ValidationError(field + "." + key + ": expected a number");
  return v.get<double>();
}

long long integer_member(const json& obj, const char* key, const std::string& field) {
  const json& v = member(obj, key, field);
  if (!v.is_number_integer()) throw ValidationError(field + "." + key + ": expected an integer");
  return v.get<long long>();
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                     e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_json_text(buf.str(), path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(1) + "\n");
}

}  // namespace asam::io

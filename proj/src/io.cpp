#include "nmpo/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <system_error>

#include "nmpo/error.hpp"

namespace nmpo {

namespace fs = std::filesystem;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "read failed: '" + path.string() + "'");
  return buffer.str();
}

namespace {

fs::path temp_sibling(const fs::path& path) {
  // Unique enough for one command per process.
  static std::uint64_t counter = 0;
  const auto tag = std::to_string(fnv1a64(path.string()) ^ ++counter);
  return path.parent_path() / ("." + path.filename().string() + ".tmp-" + tag);
}

void write_plain(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw Error(ErrorKind::Io, "write failed: '" + path.string() + "'");
}

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  const fs::path tmp = temp_sibling(path);
  try {
    write_plain(tmp, content);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorKind::Io, "cannot rename into '" + path.string() + "'");
  }
}

void write_directory_atomic(const fs::path& dir, const FileSet& files,
                            bool force) {
  std::error_code ec;
  if (fs::exists(dir) && !force) {
    throw Error(ErrorKind::Usage,
                "output '" + dir.string() + "' exists (use --force)");
  }
  const fs::path target = fs::absolute(dir).lexically_normal();
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  const fs::path tmp = temp_sibling(target);
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    for (const auto& [name, content] : files) {
      const fs::path file = tmp / name;
      fs::create_directories(file.parent_path());
      write_plain(file, content);
    }
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(tmp, ec);
    throw Error(ErrorKind::Io, e.what());
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  if (fs::exists(target)) fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove_all(tmp, ec);
    throw Error(ErrorKind::Io, "cannot rename into '" + target.string() + "'");
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error(ErrorKind::Internal, "to_chars failed");
  return std::string(buf, end);
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) return false;
  if (!std::isfinite(v)) return false;
  out = v;
  return true;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace nmpo

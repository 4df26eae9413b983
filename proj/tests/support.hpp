#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace support {

inline std::filesystem::path source_dir()
{
    return PLACES_SOURCE_DIR;
}

inline std::filesystem::path data_file(std::string const & name)
{
    return source_dir() / "data" / name;
}

inline std::filesystem::path fixture(std::string const & name)
{
    return source_dir() / "tests" / "data" / name;
}

inline std::string read_file(std::filesystem::path const & p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(std::filesystem::path const & p, std::string const & text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("places-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(TempDir const &) = delete;
    TempDir & operator=(TempDir const &) = delete;

    std::filesystem::path operator/(std::string const & name) const { return path_ / name; }
    std::filesystem::path const & path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace support

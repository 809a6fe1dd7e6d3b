#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <vector>

#include "gramsld/data_model.hpp"

namespace gramsld {

// Append-only JSON Lines log. Each record carries a sequence number; records
// are flushed before append() returns. A torn final line is dropped on read.
class Journal {
public:
    explicit Journal(std::filesystem::path path);

    const std::filesystem::path& path() const { return path_; }

    // Returns the assigned sequence number.
    std::size_t append(Json record);
    std::vector<Json> records() const;
    std::size_t size() const;

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::size_t next_seq_ = 0;
    std::ofstream out_;
};

std::vector<Json> read_journal(const std::filesystem::path& path);

}  // namespace gramsld

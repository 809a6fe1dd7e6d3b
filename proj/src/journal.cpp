#include "gramsld/journal.hpp"

#include "gramsld/error.hpp"

namespace gramsld {

std::vector<Json> read_journal(const std::filesystem::path& path) {
    std::vector<Json> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::exception&) {
            // Partial write from a crash; nothing after it is trustworthy.
            break;
        }
    }
    return out;
}

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    const auto existing = read_journal(path_);
    next_seq_ = existing.size();
    if (!existing.empty()) {
        // Rewrite without any torn tail so appends start on a clean line.
        std::ofstream rewrite(path_, std::ios::trunc);
        for (const auto& r : existing) rewrite << r.dump() << '\n';
    }
    out_.open(path_, std::ios::app);
    if (!out_) throw IoError("cannot open journal " + path_.string());
}

std::size_t Journal::append(Json record) {
    std::lock_guard lock(mu_);
    const auto seq = next_seq_++;
    record["seq"] = seq;
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("journal write failed");
    return seq;
}

std::vector<Json> Journal::records() const {
    std::lock_guard lock(mu_);
    return read_journal(path_);
}

std::size_t Journal::size() const {
    std::lock_guard lock(mu_);
    return next_seq_;
}

}  // namespace gramsld

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "idm/corpus.hpp"
#include "idm/util.hpp"

namespace idm::test {

inline Item make_item(std::string id, std::string passage_id, std::string passage, std::string question,
                      std::vector<std::string> options, int key, double difficulty,
                      std::optional<std::string> school = std::nullopt) {
    Item item;
    item.item_id = std::move(id);
    item.passage_id = std::move(passage_id);
    item.passage = std::move(passage);
    item.question = std::move(question);
    item.options = std::move(options);
    item.key = key;
    item.difficulty = difficulty;
    item.school_type = std::move(school);
    return item;
}

inline Item tiny_item(std::string id = "i1") {
    return make_item(std::move(id), "p1", "The cat sat on the mat.", "Where did the cat sit?",
                     {"on the mat", "in the hat", "under a tree", "by the door"}, 0, 0.5, "high");
}

// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("idm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

inline std::size_t count_id(const TokenSequence& s, std::int32_t id) { return s.count(id); }

}  // namespace idm::test

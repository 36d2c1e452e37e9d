#pragma once

#include <chrono>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "curate/manifest.hpp"

namespace curate {

struct CatalogChapter {
  std::string chapter_id;
  std::string title;
  std::string audio_url;
  std::vector<std::string> reader_ids;

  bool operator==(const CatalogChapter&) const = default;
};

struct CatalogEntry {
  std::string book_id;
  std::string title;
  std::string language;
  std::vector<CatalogChapter> chapters;

  bool operator==(const CatalogEntry&) const = default;
};

struct CatalogQuery {
  std::string base_url;                           // e.g. "https://librivox.org"
  std::string path = "/api/feed/audiobooks";
  std::string language;                           // empty: no filter
  int page_size = 50;
  int max_retries = 3;                            // total attempts per page
  int concurrency = 4;                            // pages in flight
  std::chrono::milliseconds backoff{200};         // doubled after every failed attempt
  std::chrono::seconds timeout{30};
};

struct CatalogResult {
  std::vector<CatalogEntry> entries;  // sorted by book_id, deduplicated
  std::vector<std::string> warnings;
  std::size_t pages = 0;
};

/// Drains every page of the catalog feed. Throws CatalogError on a
/// non-retriable status, exhausted retries or malformed JSON.
CatalogResult fetch_catalog(const CatalogQuery& query);

/// Parses one page body; chapters without an audio URL or reader are skipped with a warning.
std::vector<CatalogEntry> parse_catalog_page(const std::string& body, std::vector<std::string>& warnings);

struct ExclusionResult {
  std::vector<CatalogEntry> entries;
  std::size_t removed_chapters = 0;
  std::size_t removed_books = 0;
};

/// One speaker id per line; `#` starts a comment.
std::set<std::string> read_exclusions(const std::filesystem::path& path);

/// Drops every chapter read by an excluded speaker, then books left without chapters.
ExclusionResult apply_exclusions(std::vector<CatalogEntry> entries, const std::set<std::string>& excluded);

/// ChapterRecords pointing at `audio_dir/<chapter_id><extension>`, where the
/// operator's transfer tooling is expected to place the downloads.
std::vector<ChapterRecord> to_chapter_records(std::span<const CatalogEntry> entries, const std::string& audio_dir,
                                              const std::string& extension = ".mp3");
/// `chapter_id<TAB>url` lines for external download tooling.
std::string download_list(std::span<const CatalogEntry> entries);

Json to_json(const CatalogEntry& entry);

}  // namespace curate

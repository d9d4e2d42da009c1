//! Holds the `acceptance` test target (`tests/acceptance.rs`): one
//! PASS/FAIL line per criterion, on the data and configs in the repo.

//! Binary file formats and storage accounting.

pub mod accounting;
pub mod container;
pub mod files;
pub mod stream;

pub use accounting::{OfflineReport, OnlineReport};
pub use files::{
    decode_archive, decode_problems, encode_archive, encode_problems, read_archive_file,
    read_problem_file, write_archive_file, write_problem_file, ARCHIVE_MAGIC, PROBLEM_MAGIC,
};
pub use stream::{
    create_stream, open_stream, write_stream, StreamHeader, StreamReader, StreamWriter,
};

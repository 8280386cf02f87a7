pub mod bratteli;
pub mod cli;
pub mod builtins;
pub mod error;
pub mod format;
pub mod kr;
pub mod nested;
pub mod pds;
pub mod space;
pub mod versik;

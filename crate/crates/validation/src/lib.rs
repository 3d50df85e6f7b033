//! Test-only package hosting the `acceptance` target, which checks the
//! solver against its nine acceptance criteria and prints one PASS/FAIL line
//! per criterion. Run it with `cargo test -p drawdown-validation`.

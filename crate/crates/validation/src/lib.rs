//! Holds the `acceptance` test target. It lives in its own package so that a
//! workspace test run executes it after every unit and module test.

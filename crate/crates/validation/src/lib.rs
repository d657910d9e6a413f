//! Holds the `acceptance` test target, which exercises the library and the
//! command implementations end to end. The crate has no runtime code.

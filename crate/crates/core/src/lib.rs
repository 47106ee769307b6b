//! Graphical interfaces for command-line tools, derived from annotated
//! parsing expression grammars.

pub mod dsl;
pub mod eval;
pub mod gen;
pub mod grammar;
pub mod gui;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/guidelines.md")]
    mod guidelines {}
    #[doc = include_str!("../../../book/src/gui.md")]
    mod gui {}
    #[doc = include_str!("../../../book/src/generation.md")]
    mod generation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

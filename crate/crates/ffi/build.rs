use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let src = crate_dir.join("src/lib.rs");
    println!("cargo:rerun-if-changed={}", src.display());
    println!("cargo:rerun-if-changed=build.rs");

    let header = crate_dir.join("include/cfcomm.h");
    match cbindgen::Builder::new()
        .with_src(&src)
        .with_language(cbindgen::Language::C)
        .with_include_guard("CFCOMM_H")
        .with_no_includes()
        .with_sys_include("stddef.h")
        .with_sys_include("stdint.h")
        .with_documentation(true)
        .with_header("/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */")
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(header);
        }
        Err(e) => println!("cargo:warning=cbindgen failed: {e}"),
    }
}

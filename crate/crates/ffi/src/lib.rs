//! C ABI over `codingtree`.
//!
//! Objects cross the boundary as opaque handles created by `ct_*_new`,
//! `ct_*_read` or `ct_*_build` functions and released with the matching
//! `ct_*_free`. Every fallible call returns a [`CtStatus`]; on failure the
//! message is available from [`ct_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and must be
//! released with [`ct_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use codingtree::entropy::{random_tree, sema, structural_entropy, CodingTree, TreeFile};
use codingtree::features::{featurize, load_embeddings, EmbeddingTable};
use codingtree::graphio::{parse_graph, read_graph, serialize_graph, DocumentGraph};
use codingtree::learner::{count_params, forward, Checkpoint, Mode, TreeModel};
use codingtree::Error;
use rand_chacha::ChaCha8Rng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Parse = 4,
    Config = 5,
    Structural = 6,
    Shape = 7,
    Size = 8,
    MissingArtifact = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

/// Tree construction method for [`ct_tree_build`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CtTreeMethod {
    Sema = 0,
    Random = 1,
}

/// A validated document graph.
pub struct CtGraph(DocumentGraph);

/// A coding tree with every leaf at level 0.
pub struct CtTree(CodingTree);

/// Word vectors loaded from a text file.
pub struct CtEmbeddings(EmbeddingTable);

/// A trained model plus the feature settings it was trained with.
pub struct CtModel {
    model: TreeModel,
    position_slots: usize,
    feature_seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CtStatus {
    match err {
        Error::Validation { .. } => CtStatus::Validation,
        Error::Parse { .. } => CtStatus::Parse,
        Error::Config(_) => CtStatus::Config,
        Error::Structural(_) => CtStatus::Structural,
        Error::Shape(_) => CtStatus::Shape,
        Error::Size(_) => CtStatus::Size,
        Error::MissingArtifact { .. } => CtStatus::MissingArtifact,
        Error::Io { .. } => CtStatus::Io,
    }
}

struct Fail(CtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CtStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            CtStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(CtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(CtStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CtStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CtStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn into_c_string(bytes: Vec<u8>) -> Result<*mut c_char, Fail> {
    CString::new(bytes)
        .map(CString::into_raw)
        .map_err(|_| Fail(CtStatus::InvalidUtf8, "output contains a nul byte".into()))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next `ct_` call on this thread.
#[no_mangle]
pub extern "C" fn ct_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ct_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a graph interchange record.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_graph_from_json(json: *const c_char, out: *mut *mut CtGraph) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = parse_graph(text(json, "json")?.as_bytes())?;
        *out = boxed(CtGraph(g));
        Ok(())
    })
}

/// Reads a graph interchange file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_graph_read(path: *const c_char, out: *mut *mut CtGraph) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = read_graph(Path::new(text(path, "path")?))?;
        *out = boxed(CtGraph(g));
        Ok(())
    })
}

/// Serializes a graph; free the result with [`ct_string_free`].
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_graph_to_json(graph: *const CtGraph, out: *mut *mut c_char) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = into_c_string(serialize_graph(&borrow(graph, "graph")?.0))?;
        Ok(())
    })
}

/// Token and edge counts.
///
/// # Safety
/// `graph` must be a live handle; the out-parameters must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_graph_size(graph: *const CtGraph, nodes: *mut usize, edges: *mut usize) -> CtStatus {
    guard(|| {
        let g = &borrow(graph, "graph")?.0;
        *out_ptr(nodes, "nodes")? = g.num_nodes();
        *out_ptr(edges, "edges")? = g.num_edges();
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_graph_free(graph: *mut CtGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Builds a coding tree of exactly `height` levels for `graph`.
///
/// # Safety
/// `graph` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_build(
    graph: *const CtGraph,
    height: usize,
    method: CtTreeMethod,
    seed: u64,
    out: *mut *mut CtTree,
) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = &borrow(graph, "graph")?.0;
        let tree = match method {
            CtTreeMethod::Sema => sema(g, height)?,
            CtTreeMethod::Random => random_tree(g, height, seed)?,
        };
        *out = boxed(CtTree(tree));
        Ok(())
    })
}

/// Reads a tree file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_read(path: *const c_char, out: *mut *mut CtTree) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let file = TreeFile::read(Path::new(text(path, "path")?))?;
        *out = boxed(CtTree(file.tree));
        Ok(())
    })
}

/// Structural entropy of `graph` under `tree`, in bits.
///
/// # Safety
/// Both handles must be live; `bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_entropy(graph: *const CtGraph, tree: *const CtTree, bits: *mut f64) -> CtStatus {
    guard(|| {
        let e = structural_entropy(&borrow(graph, "graph")?.0, &borrow(tree, "tree")?.0)?;
        *out_ptr(bits, "bits")? = e.bits;
        Ok(())
    })
}

/// Height and total node count.
///
/// # Safety
/// `tree` must be a live handle; the out-parameters must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_size(tree: *const CtTree, height: *mut usize, nodes: *mut usize) -> CtStatus {
    guard(|| {
        let t = &borrow(tree, "tree")?.0;
        *out_ptr(height, "height")? = t.height();
        *out_ptr(nodes, "nodes")? = t.len();
        Ok(())
    })
}

/// Tree file record for `tree` over `graph`, entropy included. Free the
/// result with [`ct_string_free`].
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_to_json(graph: *const CtGraph, tree: *const CtTree, out: *mut *mut c_char) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let g = &borrow(graph, "graph")?.0;
        let t = &borrow(tree, "tree")?.0;
        let file = TreeFile {
            doc_id: g.doc_id().to_string(),
            tree: t.clone(),
            entropy_bits: structural_entropy(g, t)?.bits,
        };
        *out = into_c_string(file.to_json())?;
        Ok(())
    })
}

/// # Safety
/// `tree` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_tree_free(tree: *mut CtTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Loads word vectors (`word v1 .. vd` per line).
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_embeddings_read(path: *const c_char, out: *mut *mut CtEmbeddings) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let table = load_embeddings(Path::new(text(path, "path")?))?;
        *out = boxed(CtEmbeddings(table));
        Ok(())
    })
}

/// Vector dimension and vocabulary size.
///
/// # Safety
/// `emb` must be a live handle; the out-parameters must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_embeddings_size(emb: *const CtEmbeddings, dim: *mut usize, words: *mut usize) -> CtStatus {
    guard(|| {
        let t = &borrow(emb, "embeddings")?.0;
        *out_ptr(dim, "dim")? = t.dim();
        *out_ptr(words, "words")? = t.len();
        Ok(())
    })
}

/// # Safety
/// `emb` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_embeddings_free(emb: *mut CtEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// Loads a model checkpoint written by the `train` command.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_read(path: *const c_char, out: *mut *mut CtModel) -> CtStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = Path::new(text(path, "path")?);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                stage: "train",
                path: path.to_path_buf(),
            }
            .into());
        }
        let ck = Checkpoint::read(path)?;
        *out = boxed(CtModel {
            model: ck.to_model()?,
            position_slots: ck.position_slots,
            feature_seed: ck.feature_seed,
        });
        Ok(())
    })
}

/// Parameter count and number of classes.
///
/// # Safety
/// `model` must be a live handle; the out-parameters must be writable.
#[no_mangle]
pub unsafe extern "C" fn ct_model_size(model: *const CtModel, params: *mut usize, classes: *mut usize) -> CtStatus {
    guard(|| {
        let m = &borrow(model, "model")?.model;
        *out_ptr(params, "params")? = count_params(m);
        *out_ptr(classes, "classes")? = m.dims.classes;
        Ok(())
    })
}

/// Classifies one document. Writes the predicted class to `class` and, when
/// `probs` is not null, the class probabilities to `probs[0..probs_len]`
/// (`probs_len` must be at least the class count).
///
/// # Safety
/// Handles must be live; `probs` must be null or hold `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ct_model_predict(
    model: *const CtModel,
    graph: *const CtGraph,
    tree: *const CtTree,
    emb: *const CtEmbeddings,
    class: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> CtStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let g = &borrow(graph, "graph")?.0;
        let t = &borrow(tree, "tree")?.0;
        let table = &borrow(emb, "embeddings")?.0;
        let class = out_ptr(class, "class")?;
        t.hierarchy().leaf_index(g.num_nodes())?;
        let x0 = featurize(g, table, m.position_slots, m.feature_seed)?;
        let pass = forward::<ChaCha8Rng>(&m.model, t, &x0, Mode::Eval)?;
        let p = pass.probs.as_slice().expect("contiguous");
        if !probs.is_null() {
            if probs_len < p.len() {
                return Err(Fail(
                    CtStatus::BufferTooSmall,
                    format!("probability buffer holds {probs_len}, need {}", p.len()),
                ));
            }
            std::slice::from_raw_parts_mut(probs, p.len()).copy_from_slice(p);
        }
        *class = codingtree::learner::argmax(pass.probs.view());
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn ct_model_free(model: *mut CtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

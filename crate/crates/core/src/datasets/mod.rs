//! MNIST ingestion and the colored-MNIST domain generators.

mod cache;
mod colored;
mod idx;

pub use cache::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use colored::{
    binary_label, cs_acceptance_probability, make_cmnist, make_cs_cmnist, split_indices, split_train_val, ColoredDataset, DatasetKind, DomainRole,
    DomainSpec, CMNIST_BIASES, CMNIST_LABEL_NOISE, CMNIST_SIZES, CS_CMNIST_BIASES, CS_CMNIST_SIZE,
    CS_PALETTE, IMAGE_SIDE,
};
pub use idx::{load_mnist_dir, load_mnist_idx, parse_idx_images, parse_idx_labels, GrayMnist};

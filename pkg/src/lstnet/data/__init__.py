from .augment import dilate, dilate_erode, erode, rotate_image
from .idx import FormatError, IdxDataset, load_idx, read_idx, save_idx, write_idx
from .mnist import load_mnist
from .pools import (
    AugmentedPool,
    DataError,
    TripletBatch,
    make_combined_eval,
    make_dilation_set,
    make_eval_triplets,
    make_rotation_set,
    rotation_angles,
    sample_triplets,
    split_dataset,
)
from .sequences import (
    SequenceConfig,
    SequenceSample,
    gen_sequences,
    load_sequences,
    sample_sequence_triplets,
    save_sequences,
)

"""Panoptic network: shared backbone, instance branch, Gabor-attention
semantic branch, losses, training loop, and checkpoint surgery."""

from lsbseg.network.anchors import box_decode, box_encode, box_iou, generate_anchors
from lsbseg.network.backbone import Backbone
from lsbseg.network.checkpoint import load_checkpoint, save_checkpoint
from lsbseg.network.gga import GaborAttention, SemanticBranch, gabor_bank
from lsbseg.network.heads import InstanceHead, MaskHead
from lsbseg.network.model import Detection, PanopticNet, expand_input_channels
from lsbseg.network.roi import roi_crop
from lsbseg.network.train import TrainSchedule, instance_lr, semantic_lr, train

__all__ = [
    "box_decode",
    "box_encode",
    "box_iou",
    "generate_anchors",
    "Backbone",
    "load_checkpoint",
    "save_checkpoint",
    "GaborAttention",
    "SemanticBranch",
    "gabor_bank",
    "InstanceHead",
    "MaskHead",
    "Detection",
    "PanopticNet",
    "expand_input_channels",
    "roi_crop",
    "TrainSchedule",
    "instance_lr",
    "semantic_lr",
    "train",
]

"""Keypoint names used by the presets."""

HUMAN_KEYPOINTS = (
    "nose",
    "neck",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)

HEAD_KEYPOINTS = ("nose", "neck", "left_eye", "right_eye", "left_ear", "right_ear")

ROBOT_KEYPOINTS = ("elbow", "forearm", "end_effector")

_SIDES = ("left_", "right_")


def keypoint_class(name: str) -> str:
    """``"left_wrist"`` -> ``"wrist"``; names without a side prefix are returned as is."""
    for side in _SIDES:
        if name.startswith(side):
            return name[len(side):]
    return name


def resolve(name: str, keys, aliases=None):
    """Find the entry of ``keys`` that applies to ``name``.

    Tries the exact name, then an alias, then the side-less class name.
    Returns None when nothing matches.
    """
    if name in keys:
        return name
    if aliases and name in aliases and aliases[name] in keys:
        return aliases[name]
    cls = keypoint_class(name)
    if cls in keys:
        return cls
    return None

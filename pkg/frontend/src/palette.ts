/** The 42-joint palette, ordered like the backend schema.
 *
 * Per hand: each finger runs fingertip -> root (thumb4 .. thumb1, index4
 * .. pinky1), wrist last; right hand occupies 0..20, left hand 21..41.
 * Mirrors docs/joint_schema.json in the backend repo.
 */

export interface PaletteEntry {
  index: number;
  name: string;
  hand: "right" | "left";
  finger: "thumb" | "index" | "middle" | "ring" | "pinky" | "wrist";
  color: string;
}

const FINGERS = ["thumb", "index", "middle", "ring", "pinky"] as const;

export const FINGER_COLORS: Record<PaletteEntry["finger"], string> = {
  thumb: "#e6a117",
  index: "#3fa34d",
  middle: "#2e86de",
  ring: "#9b59b6",
  pinky: "#e74c3c",
  wrist: "#f0f0f0",
};

function buildHand(hand: "right" | "left", base: number): PaletteEntry[] {
  const prefix = hand === "right" ? "r" : "l";
  const entries: PaletteEntry[] = [];
  FINGERS.forEach((finger, f) => {
    for (let level = 4; level >= 1; level--) {
      entries.push({
        index: base + 4 * f + (4 - level),
        name: `${prefix}_${finger}${level}`,
        hand,
        finger,
        color: FINGER_COLORS[finger],
      });
    }
  });
  entries.push({
    index: base + 20,
    name: `${prefix}_wrist`,
    hand,
    finger: "wrist",
    color: FINGER_COLORS.wrist,
  });
  return entries;
}

export const JOINT_PALETTE: PaletteEntry[] = [...buildHand("right", 0), ...buildHand("left", 21)];

export const NUM_JOINTS = JOINT_PALETTE.length;

export function jointName(index: number): string {
  const entry = JOINT_PALETTE[index];
  return entry ? entry.name : `joint ${index}`;
}

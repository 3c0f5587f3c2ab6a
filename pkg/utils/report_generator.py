from reportlab.platypus import (
    SimpleDocTemplate, Table, TableStyle,
    Paragraph, Spacer
)
from reportlab.lib.pagesizes import A4, landscape
from reportlab.lib.styles import getSampleStyleSheet, ParagraphStyle
from reportlab.lib import colors
from reportlab.lib.units import mm

from io import BytesIO
from typing import List, Optional, Sequence

from models.report import EVAL_CHANNELS, EvalReport

MISSING = "n/a"
CHANNEL_TITLES = {
    "vehicle": "Vehicle",
    "road": "Road",
    "sidewalk": "Sidewalk",
    "crosswalk": "Crosswalk",
    "ego_lane": "Ego lane",
    "lane": "Lane",
}


def fmt(value: Optional[float]) -> str:
    return MISSING if value is None else f"{100.0 * value:.2f}"


class ReportGenerator:
    """Comparison tables over EvalReports (values shown in percent)."""

    @staticmethod
    def comparison_header(thresholds: Sequence[float]) -> List[str]:
        header = ["Method"]
        for name in EVAL_CHANNELS:
            header += [f"{CHANNEL_TITLES[name]} mIoU", f"{CHANNEL_TITLES[name]} mAP"]
        header += ["Occl. mIoU", "mIoU", "mAP"]
        for t in thresholds:
            header += [f"AP@{t:g}", f"R@{t:g}"]
        return header

    @staticmethod
    def comparison_rows(reports: Sequence[EvalReport]) -> List[List[str]]:
        thresholds = sorted({lm.threshold for r in reports for lm in r.lane_detection})
        rows = [ReportGenerator.comparison_header(thresholds)]
        for r in reports:
            row = [r.method]
            for name in EVAL_CHANNELS:
                row += [fmt(r.metric(name, "iou")), fmt(r.metric(name, "ap"))]
            row += [fmt(r.occluded_miou), fmt(r.miou), fmt(r.map)]
            for t in thresholds:
                lm = r.lane_metrics(t)
                row += [fmt(lm.ap if lm else None), fmt(lm.recall if lm else None)]
            rows.append(row)
        return rows

    @staticmethod
    def to_markdown(reports: Sequence[EvalReport]) -> str:
        rows = ReportGenerator.comparison_rows(reports)
        lines = ["| " + " | ".join(rows[0]) + " |", "|" + "---|" * len(rows[0])]
        lines += ["| " + " | ".join(row) + " |" for row in rows[1:]]
        return "\n".join(lines) + "\n"

    @staticmethod
    def eval_table(report: EvalReport) -> str:
        """Per-channel breakdown of a single report."""
        lines = [
            f"Method: {report.method}  Frames: {report.frame_count}  Failed frames: {len(report.frame_errors)}",
            "",
            "| Channel | mIoU | mAP | Occl. mIoU | Excluded (IoU/AP/Occl.) |",
            "|---|---|---|---|---|",
        ]
        for name in EVAL_CHANNELS:
            cm = report.classes.get(name)
            if cm is None:
                continue
            lines.append(
                f"| {CHANNEL_TITLES[name]} | {fmt(cm.iou)} | {fmt(cm.ap)} | {fmt(cm.occluded_iou)} "
                f"| {cm.iou_excluded}/{cm.ap_excluded}/{cm.occluded_excluded} |"
            )
        lines.append(f"| Mean | {fmt(report.miou)} | {fmt(report.map)} | {fmt(report.occluded_miou)} | |")
        lines += ["", "| IoU threshold | Lane AP | Lane recall | Predictions | Ground truth |", "|---|---|---|---|---|"]
        for lm in report.lane_detection:
            lines.append(f"| {lm.threshold:g} | {fmt(lm.ap)} | {fmt(lm.recall)} | {lm.predictions} | {lm.ground_truth} |")
        return "\n".join(lines) + "\n"

    @staticmethod
    def generate_comparison_pdf(reports: Sequence[EvalReport], title: str = "Layout estimation benchmark") -> bytes:
        buffer = BytesIO()
        doc = SimpleDocTemplate(
            buffer,
            pagesize=landscape(A4),
            leftMargin=10,
            rightMargin=10,
            topMargin=20,
            bottomMargin=20,
            invariant=1,
            title=title,
        )

        styles = getSampleStyleSheet()
        styles.add(ParagraphStyle(
            name="HeadingCenter",
            parent=styles["Heading1"],
            alignment=1,
        ))

        story = []

        # ---------------- TITLE ----------------
        story.append(Paragraph(f"<b>{title}</b>", styles["HeadingCenter"]))
        story.append(Spacer(1, 12))

        # ---------------- TABLE ----------------
        rows = ReportGenerator.comparison_rows(reports)
        col_widths = [30 * mm] + [(275 * mm - 30 * mm) / (len(rows[0]) - 1)] * (len(rows[0]) - 1)
        header = [Paragraph(h, styles["Normal"]) for h in rows[0]]
        table = Table([header] + rows[1:], colWidths=col_widths, repeatRows=1)

        table.setStyle(TableStyle([
            ("GRID", (0, 0), (-1, -1), 0.4, colors.grey),
            ("BACKGROUND", (0, 0), (-1, 0), colors.lightgrey),
            ("ALIGN", (1, 1), (-1, -1), "RIGHT"),
            ("VALIGN", (0, 0), (-1, -1), "MIDDLE"),
            ("FONTSIZE", (0, 0), (-1, -1), 7),
        ]))

        story.append(table)
        story.append(Spacer(1, 12))
        story.append(Paragraph(
            "Values in percent; n/a marks metrics undefined for the evaluated frames.",
            styles["Normal"]
        ))

        doc.build(story)
        return buffer.getvalue()

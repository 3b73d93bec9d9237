"""
Clip Database Service for the registry of ingested recordings
"""
from typing import Optional

from ..models import Clip


class ClipService:
    """Handles all database operations for the Clip model"""

    def find_by_id(self, clip_id: str) -> Optional[Clip]:
        """
        Find clip by ID.

        Args:
            clip_id: Dataset clip ID

        Returns:
            Clip instance or None
        """
        try:
            return Clip.objects.get(clip_id=clip_id)
        except Clip.DoesNotExist:
            return None

    def find_by_split(self, split: str) -> list:
        """
        Clips of one split in manifest order.

        Args:
            split: train or test

        Returns:
            List of Clip instances
        """
        return list(Clip.objects.filter(split=split).order_by('manifest_order', 'clip_id'))

    def upsert_clip(self, data: dict) -> Clip:
        """
        Create or update clip.

        Args:
            data: Dictionary with clip data

        Returns:
            Clip instance
        """
        data = dict(data)
        clip_id = data.pop('clip_id')

        clip, created = Clip.objects.update_or_create(
            clip_id=clip_id,
            defaults=data
        )

        return clip
